#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "qar/detector.hpp"
#include "qar/labels.hpp"
#include "qar/npa.hpp"

namespace qar {

struct TrainConfig {
    double learning_rate = 1e-5;
    size_t iterations = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double regression_loss_weight = 1.0; // lambda
    double smooth_l1_delta = 1.0;
    uint64_t seed = 0;
    bool npa_enabled = false;
    size_t npa_negatives_per_phrase = 1;
    size_t confusion_refresh_interval = 10000;
    size_t confusion_min_frequency = 50;

    void validate() const;
};

// Gradients share the parameter layout.
using ParamGradients = GeneratorParams;

struct MinibatchLoss {
    double total = 0.0;
    double classification = 0.0;
    double regression = 0.0;
    size_t scored_cells = 0;   // non-IGNORE
    size_t positive_cells = 0;
    ParamGradients gradients;
};

// Sigmoid cross entropy averaged over non-IGNORE cells plus lambda times the
// smooth-L1 regression loss averaged over POS cells, with analytic gradients
// through both generator heads. Fails when no cell is scored.
MinibatchLoss compute_minibatch_loss(const GeneratorParams& params,
                                     const std::vector<RegionFeature>& regions,
                                     const std::vector<PhraseRow>& rows, const LabelMatrix& labels,
                                     double regression_loss_weight, double smooth_l1_delta);

// Convenience wrapper over un-augmented minibatches, matching assign_labels.
MinibatchLoss compute_minibatch_loss(const GeneratorParams& params, const AnnotatedImage& image,
                                     const LabelMatrix& labels, const WordVectorTable& table,
                                     double regression_loss_weight = 1.0,
                                     double smooth_l1_delta = 1.0);

class AdamOptimizer {
public:
    AdamOptimizer(const GeneratorParams& shape, double learning_rate, double beta1, double beta2,
                  double epsilon);

    void set_learning_rate(double lr) { lr_ = lr; }
    void step(GeneratorParams& params, const ParamGradients& gradients);

private:
    double lr_, beta1_, beta2_, epsilon_;
    uint64_t t_ = 0;
    ParamGradients m_, v_;
};

// Everything negative phrase augmentation needs at training time.
struct NpaInputs {
    Taxonomy taxonomy;
    CooccurrenceStats cooc;
    std::vector<LabeledObject> valset;
    std::set<std::string> noun_lexicon;
};

struct TrainResult {
    GeneratorParams params;
    std::vector<double> loss_history;         // one entry per iteration
    std::vector<size_t> confusion_rebuilds;   // 1-based iteration indices
    ConfusionTable confusion;                 // last table built (empty without NPA)
    size_t augmented_rows = 0;
};

// One image per step in seeded-shuffled order; with NPA enabled the confusion
// table is rebuilt every confusion_refresh_interval iterations from categories
// seen at least confusion_min_frequency times in the preceding window (the
// whole dataset when it is smaller than the window), and minibatches are
// augmented once a table exists. Deterministic given the seed.
TrainResult train(const GeneratorParams& init, const std::vector<AnnotatedImage>& dataset,
                  const WordVectorTable& table, const TrainConfig& config,
                  const NpaInputs* npa = nullptr);

} // namespace qar
