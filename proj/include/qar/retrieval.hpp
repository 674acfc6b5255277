#pragma once

#include <string>
#include <vector>

#include "qar/detector.hpp"
#include "qar/embedding.hpp"
#include "qar/ivfadc.hpp"

namespace qar {

struct QueryResult {
    uint64_t image_id = 0;
    uint32_t region_id = 0;
    double score = 0.0;
    Box proposal_box;
    Box regressed_box;
};

// Full query path: embed the text, generate the detector, rank regions, and
// regress each returned box. Exactly one of `index` / `exact_features` must be
// given; the regressor consumes PQ-reconstructed features in index mode and
// raw features in exact mode.
std::vector<QueryResult> retrieve(const IvfadcIndex* index, const FeatureSet* exact_features,
                                  const GeneratorParams& params, const WordVectorTable& table,
                                  const std::string& query, size_t topk, size_t nprobe);

} // namespace qar
