#include "qar/labels.hpp"

#include "qar/error.hpp"

namespace qar {

void AnnotatedImage::validate() const {
    if (regions.empty()) fail(ErrorCode::InvalidArgument, "image has no regions");
    if (phrases.empty()) fail(ErrorCode::InvalidArgument, "image has no phrases");
    for (const auto& r : regions) {
        if (r.image_id != image_id) {
            fail(ErrorCode::InvalidArgument, "region image_id does not match image");
        }
        r.box.require_valid();
    }
    for (const auto& [phrase, box] : phrases) {
        if (phrase.tokens.empty()) fail(ErrorCode::InvalidArgument, "annotation phrase has no tokens");
        box.require_valid();
    }
}

void LabelMatrix::append_augmented_row(const std::vector<Label>& row) {
    if (row.size() != cols_) {
        fail(ErrorCode::InvalidArgument, "augmented row width does not match matrix");
    }
    for (Label l : row) {
        if (l == Label::Pos) {
            fail(ErrorCode::InvalidArgument, "augmented rows may not contain positive labels");
        }
    }
    cells_.insert(cells_.end(), row.begin(), row.end());
    ++rows_;
}

void LabelMatrix::validate() const {
    for (size_t r = 0; r < rows_; ++r) {
        for (size_t c = 0; c < cols_; ++c) {
            Label l = at(r, c);
            if (r < original_rows_ && l == Label::Ignore) {
                fail(ErrorCode::Internal, "original label row contains IGNORE");
            }
            if (r >= original_rows_ && l == Label::Pos) {
                fail(ErrorCode::Internal, "augmented label row contains POS");
            }
        }
    }
}

LabelMatrix assign_labels(const AnnotatedImage& image) {
    image.validate();
    LabelMatrix labels(image.phrases.size(), image.regions.size());
    for (size_t c = 0; c < image.phrases.size(); ++c) {
        const Box& gt = image.phrases[c].second;
        for (size_t r = 0; r < image.regions.size(); ++r) {
            if (box_iou(image.regions[r].box, gt) > 0.5) {
                labels.set(c, r, Label::Pos);
            }
        }
    }
    return labels;
}

std::vector<PhraseRow> make_phrase_rows(const AnnotatedImage& image, const WordVectorTable& table) {
    std::vector<PhraseRow> rows;
    rows.reserve(image.phrases.size());
    for (const auto& [phrase, gt] : image.phrases) {
        rows.push_back(PhraseRow{phrase, embed_phrase(table, phrase), gt, false});
    }
    return rows;
}

} // namespace qar
