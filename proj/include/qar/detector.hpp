#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qar/embedding.hpp"
#include "qar/geometry.hpp"

namespace qar {

// Trainable weights of the detector generator: a linear classifier map and a
// four-headed regressor MLP with one shared rectifier hidden layer.
struct GeneratorParams {
    size_t embed_dim = 0;
    size_t feature_dim = 0;
    size_t hidden_dim = 0;

    // row-major throughout
    std::vector<double> W;                    // feature_dim x embed_dim
    std::vector<double> H1;                   // hidden_dim x embed_dim
    std::vector<double> b1;                   // hidden_dim
    std::array<std::vector<double>, 4> H2;    // each feature_dim x hidden_dim (x, y, w, h)
    std::array<std::vector<double>, 4> b2;    // each feature_dim

    static GeneratorParams zeros(size_t embed_dim, size_t feature_dim, size_t hidden_dim);
    static GeneratorParams random_init(size_t embed_dim, size_t feature_dim, size_t hidden_dim,
                                       uint64_t seed);

    size_t classifier_parameter_count() const { return feature_dim * embed_dim; }
    size_t regressor_parameter_count() const {
        return embed_dim * hidden_dim + hidden_dim + 4 * (hidden_dim * feature_dim + feature_dim);
    }

    void validate() const;
};

// Per-query weights produced by the generator.
struct Detector {
    std::vector<double> w_c;                 // feature_dim
    std::array<std::vector<double>, 4> w_r;  // feature_dim each (x, y, w, h)
};

Detector generate_detector(const GeneratorParams& params, const PhraseEmbedding& v);

double score_region(const Detector& det, std::span<const float> feature);
double score_region(std::span<const double> w_c, std::span<const float> feature);

// Deltas predicted by the generated regressor for one region feature.
BoxDeltas predict_deltas(const Detector& det, std::span<const float> feature);
BoxDeltas predict_deltas(const Detector& det, std::span<const double> feature);

// QARW container: magic, version u32, dims u32x3, then W, H1, b1,
// H2_x..H2_h, b2_x..b2_h as f32 little-endian row-major.
GeneratorParams load_generator_params(const std::string& path);
void save_generator_params(const std::string& path, const GeneratorParams& params);

} // namespace qar
