#include "qar/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "qar/error.hpp"
#include "qar/retrieval.hpp"

namespace qar {

using nlohmann::json;

namespace {

const std::set<std::string> kEmptyLexicon;

constexpr double kLocalizationGrid[] = {0.5, 0.6, 0.7, 0.8, 0.9};

std::string query_key(const std::string& text) {
    Phrase phrase = make_phrase(text);
    if (phrase.tokens.empty()) {
        fail(ErrorCode::InvalidArgument, "query has no tokens: '" + text + "'");
    }
    return extract_head_noun(phrase, kEmptyLexicon).token;
}

} // namespace

std::vector<bool> match_ranked(const std::vector<RankedRegion>& ranked,
                               const std::vector<GroundTruthInstance>& positives,
                               double iou_threshold) {
    std::unordered_map<uint64_t, std::vector<size_t>> gt_by_image;
    for (size_t g = 0; g < positives.size(); ++g) {
        gt_by_image[positives[g].image_id].push_back(g);
    }
    std::vector<bool> matched_gt(positives.size(), false);
    std::vector<bool> tp(ranked.size(), false);
    for (size_t i = 0; i < ranked.size(); ++i) {
        auto it = gt_by_image.find(ranked[i].image_id);
        if (it == gt_by_image.end()) continue;
        double best_iou = 0.0;
        size_t best_g = positives.size();
        for (size_t g : it->second) {
            if (matched_gt[g]) continue;
            double overlap = box_iou(ranked[i].box, positives[g].box);
            if (overlap > best_iou) {
                best_iou = overlap;
                best_g = g;
            }
        }
        if (best_g < positives.size() && best_iou >= iou_threshold) {
            matched_gt[best_g] = true;
            tp[i] = true;
        }
    }
    return tp;
}

double average_precision(const std::vector<RankedRegion>& ranked,
                         const std::vector<GroundTruthInstance>& positives, double iou_threshold) {
    if (positives.empty()) fail(ErrorCode::InvalidArgument, "no positives for this query");
    std::vector<bool> tp = match_ranked(ranked, positives, iou_threshold);
    double sum = 0.0;
    size_t hits = 0;
    for (size_t i = 0; i < tp.size(); ++i) {
        if (!tp[i]) continue;
        ++hits;
        sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
    return sum / static_cast<double>(positives.size());
}

double precision_at_k(const std::vector<RankedRegion>& ranked,
                      const std::vector<GroundTruthInstance>& positives, size_t k,
                      double iou_threshold) {
    if (k == 0) fail(ErrorCode::InvalidArgument, "k must be >= 1");
    std::vector<bool> tp = match_ranked(ranked, positives, iou_threshold);
    size_t hits = 0;
    for (size_t i = 0; i < std::min(k, tp.size()); ++i) {
        if (tp[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(k);
}

double localization_accuracy(const std::vector<Box>& predictions, const std::vector<Box>& gts,
                             double threshold) {
    if (predictions.size() != gts.size()) {
        fail(ErrorCode::InvalidArgument, "predictions and ground truths are not aligned");
    }
    if (predictions.empty()) fail(ErrorCode::Empty, "no phrases to score");
    size_t hits = 0;
    for (size_t i = 0; i < predictions.size(); ++i) {
        if (box_iou(predictions[i], gts[i]) >= threshold) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double mean_average_precision(const std::vector<double>& per_query_ap) {
    if (per_query_ap.empty()) fail(ErrorCode::Empty, "no queries with positives");
    double sum = 0.0;
    for (double ap : per_query_ap) sum += ap;
    return sum / static_cast<double>(per_query_ap.size());
}

std::vector<size_t> dedup_ranked_indices(const std::vector<RankedRegion>& ranked) {
    struct BoxKey {
        uint64_t image_id;
        double x1, y1, x2, y2;
        bool operator<(const BoxKey& o) const {
            return std::tie(image_id, x1, y1, x2, y2) <
                   std::tie(o.image_id, o.x1, o.y1, o.x2, o.y2);
        }
    };
    std::set<BoxKey> seen;
    std::vector<size_t> keep;
    keep.reserve(ranked.size());
    for (size_t i = 0; i < ranked.size(); ++i) {
        const auto& r = ranked[i];
        if (seen.insert(BoxKey{r.image_id, r.box.x1, r.box.y1, r.box.x2, r.box.y2}).second) {
            keep.push_back(i);
        }
    }
    return keep;
}

EvaluationReport evaluate_retrieval(const GeneratorParams& params, const WordVectorTable& table,
                                    const std::vector<AnnotationRecord>& annotations,
                                    const std::vector<std::string>& queries, double iou_threshold,
                                    const IvfadcIndex* index, const FeatureSet* features,
                                    size_t nprobe) {
    if ((index == nullptr) == (features == nullptr)) {
        fail(ErrorCode::InvalidArgument, "evaluation needs exactly one of index or raw features");
    }
    if (queries.empty()) fail(ErrorCode::InvalidArgument, "no queries");

    size_t total_regions = index ? index->total() : features->size();
    if (total_regions == 0) fail(ErrorCode::Empty, "nothing to rank");
    if (index && nprobe == 0) nprobe = index->coarse.nlist;

    // group ground truth by head noun
    std::unordered_map<std::string, std::vector<GroundTruthInstance>> gt_by_key;
    for (const auto& rec : annotations) {
        Phrase phrase = make_phrase(rec.phrase);
        if (phrase.tokens.empty()) continue;
        gt_by_key[extract_head_noun(phrase, kEmptyLexicon).token].push_back(
            GroundTruthInstance{rec.image_id, rec.box});
    }

    EvaluationReport report;
    report.iou_threshold = iou_threshold;

    std::vector<double> aps;
    std::vector<Box> loc_pred_reg, loc_pred_plain, loc_gt;

    for (const auto& query : queries) {
        std::string key = query_key(query);
        QueryMetrics qm;
        qm.query = query;

        auto git = gt_by_key.find(key);
        const std::vector<GroundTruthInstance>* positives =
            git == gt_by_key.end() ? nullptr : &git->second;
        qm.positives = positives ? positives->size() : 0;

        auto results = retrieve(index, features, params, table, query, total_regions, nprobe);

        std::vector<RankedRegion> proposal_ranked;
        proposal_ranked.reserve(results.size());
        for (const auto& r : results) {
            proposal_ranked.push_back(RankedRegion{r.image_id, r.region_id, r.proposal_box});
        }
        std::vector<size_t> keep = dedup_ranked_indices(proposal_ranked);
        std::vector<RankedRegion> ranked;
        ranked.reserve(keep.size());
        for (size_t i : keep) {
            ranked.push_back(
                RankedRegion{results[i].image_id, results[i].region_id, results[i].regressed_box});
        }

        if (positives) {
            qm.ap = average_precision(ranked, *positives, iou_threshold);
            qm.precision_at_10 = precision_at_k(ranked, *positives, 10, iou_threshold);
            qm.precision_at_100 = precision_at_k(ranked, *positives, 100, iou_threshold);
            aps.push_back(qm.ap);

            // top-1 within each instance's image, results are already ranked
            std::unordered_map<uint64_t, const QueryResult*> top1;
            for (const auto& r : results) {
                if (!top1.count(r.image_id)) top1[r.image_id] = &r;
            }
            for (const auto& gt : *positives) {
                auto it = top1.find(gt.image_id);
                if (it == top1.end()) continue; // image unseen under this probe budget
                loc_pred_reg.push_back(it->second->regressed_box);
                loc_pred_plain.push_back(it->second->proposal_box);
                loc_gt.push_back(gt.box);
            }
        }
        report.queries.push_back(std::move(qm));
    }

    if (aps.empty()) fail(ErrorCode::Empty, "no query has ground-truth positives");
    report.map = mean_average_precision(aps);
    report.queries_evaluated = aps.size();

    report.localization_instances = loc_gt.size();
    for (double t : kLocalizationGrid) {
        report.localization_with_regression[t] =
            loc_gt.empty() ? 0.0 : localization_accuracy(loc_pred_reg, loc_gt, t);
        report.localization_without_regression[t] =
            loc_gt.empty() ? 0.0 : localization_accuracy(loc_pred_plain, loc_gt, t);
    }
    return report;
}

void save_report_json(const std::string& path, const EvaluationReport& report) {
    json obj;
    obj["iou_threshold"] = report.iou_threshold;
    obj["map"] = report.map;
    obj["queries_evaluated"] = report.queries_evaluated;
    json queries = json::object();
    for (const auto& qm : report.queries) {
        json row;
        row["positives"] = qm.positives;
        if (qm.positives > 0) {
            row["ap"] = qm.ap;
            row["pr_at_10"] = qm.precision_at_10;
            row["pr_at_100"] = qm.precision_at_100;
        }
        queries[qm.query] = std::move(row);
    }
    obj["queries"] = std::move(queries);

    auto grid = [](const std::map<double, double>& accs) {
        json out = json::object();
        for (const auto& [t, a] : accs) {
            char key[8];
            std::snprintf(key, sizeof(key), "%.1f", t);
            out[key] = a;
        }
        return out;
    };
    obj["localization_accuracy"] = {
        {"instances", report.localization_instances},
        {"with_regression", grid(report.localization_with_regression)},
        {"without_regression", grid(report.localization_without_regression)},
    };

    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot open report file for writing: " + path);
    out << obj.dump(2) << '\n';
    if (!out) fail(ErrorCode::Io, "write failed: " + path);
}

} // namespace qar
