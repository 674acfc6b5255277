#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "qar/detector.hpp"
#include "qar/embedding.hpp"
#include "qar/features.hpp"
#include "qar/labels.hpp"
#include "qar/rng.hpp"

namespace qar {

// Category hierarchy (child -> parent edges, transitive ancestry). Acyclic.
class Taxonomy {
public:
    void add_edge(const std::string& child, const std::string& parent);
    bool is_ancestor(const std::string& ancestor, const std::string& node) const;
    bool related(const std::string& a, const std::string& b) const {
        return is_ancestor(a, b) || is_ancestor(b, a);
    }
    size_t edge_count() const { return edge_count_; }
    std::set<std::string> nodes() const;

    // TSV, one "child<TAB>parent" per line.
    static Taxonomy load_tsv(const std::string& path);

    void validate_acyclic() const;

private:
    std::unordered_map<std::string, std::set<std::string>> parents_;
    size_t edge_count_ = 0;
};

// Object counts per category and co-annotation counts per unordered pair.
class CooccurrenceStats {
public:
    void set_total(const std::string& category, uint64_t count);
    void set_pair(const std::string& a, const std::string& b, uint64_t count);

    uint64_t total(const std::string& category) const;
    uint64_t pair_count(const std::string& a, const std::string& b) const;

    const std::map<std::string, uint64_t>& totals() const { return totals_; }

    // totals: "category<TAB>count"; pairs: "a<TAB>b<TAB>count".
    static CooccurrenceStats load_tsv(const std::string& totals_path,
                                      const std::string& pairs_path);

    void validate() const;

private:
    std::map<std::string, uint64_t> totals_;
    std::map<std::pair<std::string, std::string>, uint64_t> pairs_;
};

// Two categories can label the same object if they are hierarchy relatives or
// if they are co-annotated on at least `ratio` of either category's objects.
bool is_mutually_exclusive(const std::string& a, const std::string& b, const Taxonomy& taxonomy,
                           const CooccurrenceStats& cooc, double ratio = 0.01);

// A validation object: one category label plus its region feature.
struct LabeledObject {
    uint64_t object_id = 0;
    std::string category;
    std::vector<float> feature;
};

// Labels validation regions by their best-overlapping annotation (IoU >= 0.5);
// the label is the annotation phrase's head noun. Unmatched regions drop out.
std::vector<LabeledObject> label_objects(const FeatureSet& features,
                                         const std::vector<struct AnnotationRecord>& annotations,
                                         const std::set<std::string>& noun_lexicon);

struct RankedCandidate {
    std::string category;
    size_t rank = 0; // 1-based
};

// Scores every validation object with the classifier generated for
// `category` and returns the top-k labels (ties broken by object id).
std::vector<RankedCandidate> mine_candidates(const GeneratorParams& params,
                                             const WordVectorTable& table,
                                             const std::vector<LabeledObject>& valset,
                                             const std::string& category, size_t k = 500);

struct ConfusionEntry {
    std::string category;
    double weight = 0.0;
};

// category -> weighted hard-negative categories, weights sum to 1.
class ConfusionTable {
public:
    bool empty() const { return entries_.empty(); }
    size_t size() const { return entries_.size(); }

    const std::vector<ConfusionEntry>* find(const std::string& category) const;
    void insert(const std::string& category, std::vector<ConfusionEntry> entries);

    const std::map<std::string, std::vector<ConfusionEntry>>& entries() const { return entries_; }

    // Weighted draw from a category's entry.
    const std::string& sample(const std::string& category, Rng& rng) const;

    void save_json(const std::string& path) const;
    static ConfusionTable load_json(const std::string& path);

    void validate() const;

private:
    std::map<std::string, std::vector<ConfusionEntry>> entries_;
};

// Mines hard negatives for every category, drops mutually non-exclusive and
// non-embeddable labels, weights by (k - rank) summed over occurrences, and
// normalizes. Categories whose candidate list empties out are omitted.
ConfusionTable build_confusion_table(const GeneratorParams& params, const WordVectorTable& table,
                                     const std::vector<LabeledObject>& valset,
                                     const Taxonomy& taxonomy, const CooccurrenceStats& cooc,
                                     const std::vector<std::string>& categories, size_t k = 500,
                                     double ratio = 0.01);

// Appends one negative-phrase row per draw: Neg exactly where the source row
// is Pos, Ignore elsewhere. Source rows without positives or without a
// confusion entry contribute nothing. `labels` must hold original rows only.
// Returns the number of appended rows.
size_t augment_minibatch(std::vector<PhraseRow>& rows, LabelMatrix& labels,
                         const ConfusionTable& table, const WordVectorTable& word_vectors,
                         const std::set<std::string>& noun_lexicon, size_t negatives_per_phrase,
                         Rng& rng);

} // namespace qar
