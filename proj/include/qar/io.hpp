#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qar/embedding.hpp"
#include "qar/features.hpp"
#include "qar/geometry.hpp"
#include "qar/labels.hpp"

namespace qar {

// One line of the annotations file:
// {"image_id": int, "phrase": str, "box": [x1,y1,x2,y2]}
struct AnnotationRecord {
    uint64_t image_id = 0;
    std::string phrase;
    Box box;
};

std::vector<AnnotationRecord> load_annotations(const std::string& path);
void save_annotations(const std::string& path, const std::vector<AnnotationRecord>& records);

// Plain text, one query phrase per line; blank lines are skipped.
std::vector<std::string> load_queries(const std::string& path);

struct DatasetStats {
    size_t images = 0;
    size_t annotations = 0;
    size_t dropped_oov_phrases = 0;
    size_t dropped_unmatched_annotations = 0; // no region shares the image_id
};

// Groups regions and annotations by image. Images without any usable phrase
// are omitted. When `vocabulary` is given, phrases with no in-vocabulary
// token are dropped (counted in stats) instead of failing later in training.
std::vector<AnnotatedImage> build_annotated_images(const FeatureSet& features,
                                                   const std::vector<AnnotationRecord>& annotations,
                                                   const WordVectorTable* vocabulary = nullptr,
                                                   DatasetStats* stats = nullptr);

} // namespace qar
