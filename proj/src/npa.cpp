#include "qar/npa.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>

#include <json.hpp>

#include "qar/error.hpp"
#include "qar/io.hpp"

namespace qar {

using nlohmann::json;

namespace {

std::pair<std::string, std::string> ordered(const std::string& a, const std::string& b) {
    return a <= b ? std::make_pair(a, b) : std::make_pair(b, a);
}

std::vector<std::string> split_tsv(const std::string& line) {
    std::vector<std::string> fields;
    size_t start = 0;
    while (true) {
        size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    if (!fields.empty() && !fields.back().empty() && fields.back().back() == '\r') {
        fields.back().pop_back();
    }
    return fields;
}

uint64_t parse_count(const std::string& text, const std::string& context) {
    try {
        size_t pos = 0;
        long long v = std::stoll(text, &pos);
        if (pos != text.size() || v < 0) throw std::invalid_argument(text);
        return static_cast<uint64_t>(v);
    } catch (const std::exception&) {
        fail(ErrorCode::Format, context + ": bad count '" + text + "'");
    }
}

} // namespace

void Taxonomy::add_edge(const std::string& child, const std::string& parent) {
    if (child.empty() || parent.empty()) {
        fail(ErrorCode::InvalidArgument, "taxonomy edge with empty category");
    }
    if (parents_[child].insert(parent).second) ++edge_count_;
}

bool Taxonomy::is_ancestor(const std::string& ancestor, const std::string& node) const {
    if (ancestor == node) return false;
    std::vector<const std::string*> stack{&node};
    std::set<std::string> seen;
    while (!stack.empty()) {
        const std::string* cur = stack.back();
        stack.pop_back();
        auto it = parents_.find(*cur);
        if (it == parents_.end()) continue;
        for (const auto& p : it->second) {
            if (p == ancestor) return true;
            if (seen.insert(p).second) stack.push_back(&p);
        }
    }
    return false;
}

std::set<std::string> Taxonomy::nodes() const {
    std::set<std::string> out;
    for (const auto& [child, parents] : parents_) {
        out.insert(child);
        out.insert(parents.begin(), parents.end());
    }
    return out;
}

Taxonomy Taxonomy::load_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open taxonomy file: " + path);
    Taxonomy tax;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto fields = split_tsv(line);
        if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
            fail(ErrorCode::Format,
                 path + ":" + std::to_string(lineno) + ": expected \"child<TAB>parent\"");
        }
        tax.add_edge(fields[0], fields[1]);
    }
    tax.validate_acyclic();
    return tax;
}

void Taxonomy::validate_acyclic() const {
    // colors: 0 unvisited, 1 on stack, 2 done
    std::unordered_map<std::string, int> color;
    std::function<void(const std::string&)> visit = [&](const std::string& node) {
        int& c = color[node];
        if (c == 1) fail(ErrorCode::Format, "taxonomy contains a cycle through '" + node + "'");
        if (c == 2) return;
        c = 1;
        auto it = parents_.find(node);
        if (it != parents_.end()) {
            for (const auto& p : it->second) visit(p);
        }
        color[node] = 2;
    };
    for (const auto& [child, parents] : parents_) visit(child);
}

void CooccurrenceStats::set_total(const std::string& category, uint64_t count) {
    totals_[category] = count;
}

void CooccurrenceStats::set_pair(const std::string& a, const std::string& b, uint64_t count) {
    pairs_[ordered(a, b)] = count;
}

uint64_t CooccurrenceStats::total(const std::string& category) const {
    auto it = totals_.find(category);
    return it == totals_.end() ? 0 : it->second;
}

uint64_t CooccurrenceStats::pair_count(const std::string& a, const std::string& b) const {
    auto it = pairs_.find(ordered(a, b));
    return it == pairs_.end() ? 0 : it->second;
}

CooccurrenceStats CooccurrenceStats::load_tsv(const std::string& totals_path,
                                              const std::string& pairs_path) {
    CooccurrenceStats stats;
    {
        std::ifstream in(totals_path);
        if (!in) fail(ErrorCode::Io, "cannot open co-occurrence totals file: " + totals_path);
        std::string line;
        size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            auto fields = split_tsv(line);
            if (fields.size() != 2) {
                fail(ErrorCode::Format, totals_path + ":" + std::to_string(lineno) +
                                            ": expected \"category<TAB>count\"");
            }
            stats.set_total(fields[0], parse_count(fields[1], totals_path + ":" + std::to_string(lineno)));
        }
    }
    {
        std::ifstream in(pairs_path);
        if (!in) fail(ErrorCode::Io, "cannot open co-occurrence pairs file: " + pairs_path);
        std::string line;
        size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            auto fields = split_tsv(line);
            if (fields.size() != 3) {
                fail(ErrorCode::Format, pairs_path + ":" + std::to_string(lineno) +
                                            ": expected \"a<TAB>b<TAB>count\"");
            }
            stats.set_pair(fields[0], fields[1],
                           parse_count(fields[2], pairs_path + ":" + std::to_string(lineno)));
        }
    }
    stats.validate();
    return stats;
}

void CooccurrenceStats::validate() const {
    for (const auto& [pair, count] : pairs_) {
        uint64_t cap = std::min(total(pair.first), total(pair.second));
        if (count > cap) {
            fail(ErrorCode::Format, "co-occurrence pair (" + pair.first + "," + pair.second +
                                        ") exceeds its category totals");
        }
    }
}

bool is_mutually_exclusive(const std::string& a, const std::string& b, const Taxonomy& taxonomy,
                           const CooccurrenceStats& cooc, double ratio) {
    if (a == b) return false;
    if (taxonomy.related(a, b)) return false;
    uint64_t shared = cooc.pair_count(a, b);
    if (shared > 0) {
        double sa = static_cast<double>(shared);
        if (sa >= ratio * static_cast<double>(cooc.total(a))) return false;
        if (sa >= ratio * static_cast<double>(cooc.total(b))) return false;
    }
    return true;
}

std::vector<LabeledObject> label_objects(const FeatureSet& features,
                                         const std::vector<AnnotationRecord>& annotations,
                                         const std::set<std::string>& noun_lexicon) {
    std::unordered_map<uint64_t, std::vector<const AnnotationRecord*>> by_image;
    for (const auto& rec : annotations) by_image[rec.image_id].push_back(&rec);

    std::vector<LabeledObject> out;
    for (size_t i = 0; i < features.size(); ++i) {
        auto it = by_image.find(features.image_id(i));
        if (it == by_image.end()) continue;
        const AnnotationRecord* best = nullptr;
        double best_iou = 0.0;
        for (const auto* rec : it->second) {
            double overlap = box_iou(features.box(i), rec->box);
            if (overlap > best_iou) {
                best = rec;
                best_iou = overlap;
            }
        }
        if (!best || best_iou < 0.5) continue; // a label needs IoU >= 0.5
        Phrase phrase = make_phrase(best->phrase);
        if (phrase.tokens.empty()) continue;
        LabeledObject obj;
        obj.object_id = out.size();
        obj.category = extract_head_noun(phrase, noun_lexicon).token;
        auto f = features.feature(i);
        obj.feature.assign(f.begin(), f.end());
        out.push_back(std::move(obj));
    }
    return out;
}

std::vector<RankedCandidate> mine_candidates(const GeneratorParams& params,
                                             const WordVectorTable& table,
                                             const std::vector<LabeledObject>& valset,
                                             const std::string& category, size_t k) {
    if (valset.empty()) fail(ErrorCode::InvalidArgument, "empty validation set");
    Phrase phrase = make_phrase(category);
    PhraseEmbedding v = embed_phrase(table, phrase); // throws OOV when unembeddable
    Detector det = generate_detector(params, v);

    std::vector<std::pair<double, size_t>> scored(valset.size());
    for (size_t i = 0; i < valset.size(); ++i) {
        scored[i] = {score_region(det, valset[i].feature), i};
    }
    std::sort(scored.begin(), scored.end(), [&](const auto& lhs, const auto& rhs) {
        if (lhs.first != rhs.first) return lhs.first > rhs.first;
        return valset[lhs.second].object_id < valset[rhs.second].object_id;
    });

    size_t take = std::min(k, scored.size());
    std::vector<RankedCandidate> out;
    out.reserve(take);
    for (size_t i = 0; i < take; ++i) {
        out.push_back(RankedCandidate{valset[scored[i].second].category, i + 1});
    }
    return out;
}

const std::vector<ConfusionEntry>* ConfusionTable::find(const std::string& category) const {
    auto it = entries_.find(category);
    return it == entries_.end() ? nullptr : &it->second;
}

void ConfusionTable::insert(const std::string& category, std::vector<ConfusionEntry> entries) {
    if (entries.empty()) fail(ErrorCode::InvalidArgument, "confusion entry must be non-empty");
    entries_[category] = std::move(entries);
}

const std::string& ConfusionTable::sample(const std::string& category, Rng& rng) const {
    const auto* entry = find(category);
    if (!entry) fail(ErrorCode::InvalidArgument, "no confusion entry for '" + category + "'");
    double u = rng.next_double();
    double cum = 0.0;
    for (const auto& e : *entry) {
        cum += e.weight;
        if (u < cum) return e.category;
    }
    return entry->back().category;
}

void ConfusionTable::save_json(const std::string& path) const {
    json obj = json::object();
    for (const auto& [category, entries] : entries_) {
        json row = json::object();
        for (const auto& e : entries) row[e.category] = e.weight;
        obj[category] = std::move(row);
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot open confusion table for writing: " + path);
    out << obj.dump(2) << '\n';
    if (!out) fail(ErrorCode::Io, "write failed: " + path);
}

ConfusionTable ConfusionTable::load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open confusion table: " + path);
    json obj;
    try {
        in >> obj;
    } catch (const json::exception& e) {
        fail(ErrorCode::Format, path + ": " + e.what());
    }
    if (!obj.is_object()) fail(ErrorCode::Format, path + ": expected a JSON object");
    ConfusionTable table;
    for (const auto& [category, row] : obj.items()) {
        if (!row.is_object()) fail(ErrorCode::Format, path + ": entry for '" + category + "'");
        std::vector<ConfusionEntry> entries;
        for (const auto& [neg, weight] : row.items()) {
            entries.push_back(ConfusionEntry{neg, weight.get<double>()});
        }
        std::sort(entries.begin(), entries.end(), [](const auto& l, const auto& r) {
            if (l.weight != r.weight) return l.weight > r.weight;
            return l.category < r.category;
        });
        table.insert(category, std::move(entries));
    }
    table.validate();
    return table;
}

void ConfusionTable::validate() const {
    for (const auto& [category, entries] : entries_) {
        double sum = 0.0;
        for (const auto& e : entries) {
            if (e.category == category) {
                fail(ErrorCode::Format, "confusion entry for '" + category + "' lists itself");
            }
            if (!(e.weight > 0.0)) {
                fail(ErrorCode::Format, "confusion weight for '" + category + "' must be positive");
            }
            sum += e.weight;
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            fail(ErrorCode::Format, "confusion weights for '" + category + "' sum to " +
                                        std::to_string(sum) + ", expected 1");
        }
    }
}

ConfusionTable build_confusion_table(const GeneratorParams& params, const WordVectorTable& table,
                                     const std::vector<LabeledObject>& valset,
                                     const Taxonomy& taxonomy, const CooccurrenceStats& cooc,
                                     const std::vector<std::string>& categories, size_t k,
                                     double ratio) {
    if (categories.empty()) fail(ErrorCode::InvalidArgument, "no categories to build entries for");
    ConfusionTable out;
    for (const auto& category : categories) {
        auto candidates = mine_candidates(params, table, valset, category, k);
        std::map<std::string, double> raw;
        for (const auto& cand : candidates) {
            if (!is_mutually_exclusive(category, cand.category, taxonomy, cooc, ratio)) continue;
            if (!table.contains(cand.category)) continue; // cannot embed it as a phrase later
            raw[cand.category] += static_cast<double>(k) - static_cast<double>(cand.rank);
        }
        double sum = 0.0;
        std::vector<ConfusionEntry> entries;
        for (const auto& [label, weight] : raw) {
            if (weight <= 0.0) continue;
            entries.push_back(ConfusionEntry{label, weight});
            sum += weight;
        }
        if (entries.empty()) continue;
        for (auto& e : entries) e.weight /= sum;
        std::sort(entries.begin(), entries.end(), [](const auto& l, const auto& r) {
            if (l.weight != r.weight) return l.weight > r.weight;
            return l.category < r.category;
        });
        out.insert(category, std::move(entries));
    }
    out.validate();
    return out;
}

size_t augment_minibatch(std::vector<PhraseRow>& rows, LabelMatrix& labels,
                         const ConfusionTable& table, const WordVectorTable& word_vectors,
                         const std::set<std::string>& noun_lexicon, size_t negatives_per_phrase,
                         Rng& rng) {
    if (labels.rows() != labels.original_rows()) {
        fail(ErrorCode::InvalidArgument, "minibatch is already augmented");
    }
    if (rows.size() != labels.original_rows()) {
        fail(ErrorCode::InvalidArgument, "phrase rows do not match label matrix");
    }
    const size_t n_r = labels.cols();
    const size_t original = labels.original_rows();
    size_t appended = 0;
    for (size_t c = 0; c < original; ++c) {
        bool has_pos = false;
        for (size_t r = 0; r < n_r; ++r) {
            if (labels.at(c, r) == Label::Pos) {
                has_pos = true;
                break;
            }
        }
        if (!has_pos) continue;

        HeadNoun head = extract_head_noun(rows[c].phrase, noun_lexicon);
        const auto* entry = table.find(head.token);
        if (!entry) continue;

        for (size_t i = 0; i < negatives_per_phrase; ++i) {
            const std::string& negative = table.sample(head.token, rng);
            Substitution sub = substitute_head_noun(rows[c].phrase, noun_lexicon, negative);
            std::vector<Label> row(n_r, Label::Ignore);
            for (size_t r = 0; r < n_r; ++r) {
                if (labels.at(c, r) == Label::Pos) row[r] = Label::Neg;
            }
            PhraseRow neg_row;
            neg_row.phrase = sub.phrase;
            neg_row.v = embed_phrase(word_vectors, sub.phrase);
            neg_row.gt = rows[c].gt;
            neg_row.augmented = true;
            rows.push_back(std::move(neg_row));
            labels.append_augmented_row(row);
            ++appended;
        }
    }
    return appended;
}

} // namespace qar
