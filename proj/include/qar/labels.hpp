#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "qar/embedding.hpp"
#include "qar/features.hpp"
#include "qar/geometry.hpp"

namespace qar {

// One training image: its region proposals and the phrase/box annotations.
// The image is the minibatch unit.
struct AnnotatedImage {
    uint64_t image_id = 0;
    std::vector<RegionFeature> regions;            // n_r >= 1
    std::vector<std::pair<Phrase, Box>> phrases;   // C_i >= 1

    void validate() const;
};

enum class Label : uint8_t { Neg = 0, Pos = 1, Ignore = 2 };

// phrases x regions grid. Rows [0, original_rows) come from the image's own
// annotations and never hold Ignore; appended rows come from negative phrase
// augmentation and hold only Neg/Ignore.
class LabelMatrix {
public:
    LabelMatrix() = default;
    LabelMatrix(size_t original_rows, size_t cols)
        : rows_(original_rows), cols_(cols), original_rows_(original_rows),
          cells_(original_rows * cols, Label::Neg) {}

    size_t rows() const { return rows_; }
    size_t cols() const { return cols_; }
    size_t original_rows() const { return original_rows_; }

    Label at(size_t row, size_t col) const { return cells_[row * cols_ + col]; }
    void set(size_t row, size_t col, Label value) { cells_[row * cols_ + col] = value; }

    void append_augmented_row(const std::vector<Label>& row);

    void validate() const;

private:
    size_t rows_ = 0;
    size_t cols_ = 0;
    size_t original_rows_ = 0;
    std::vector<Label> cells_;
};

// Pos iff the region overlaps the phrase's ground truth by IoU > 0.5.
LabelMatrix assign_labels(const AnnotatedImage& image);

// One row of a minibatch: a phrase with its embedding and ground-truth box.
struct PhraseRow {
    Phrase phrase;
    PhraseEmbedding v;
    Box gt;
    bool augmented = false;
};

// Embeds the image's phrases in order. Throws when a phrase is fully OOV.
std::vector<PhraseRow> make_phrase_rows(const AnnotatedImage& image, const WordVectorTable& table);

} // namespace qar
