#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qar/geometry.hpp"

namespace qar {

// One region proposal with its precomputed appearance feature.
struct RegionFeature {
    uint64_t image_id = 0;
    uint32_t region_id = 0;
    Box box;
    std::vector<float> feature;
};

// Column layout over many regions; features are one contiguous row-major
// block so bulk passes (clustering, encoding, scans) can map it directly.
class FeatureSet {
public:
    FeatureSet() = default;
    explicit FeatureSet(size_t dim) : dim_(dim) {}

    size_t dim() const { return dim_; }
    size_t size() const { return image_ids_.size(); }
    bool empty() const { return image_ids_.empty(); }

    void reserve(size_t n) {
        image_ids_.reserve(n);
        region_ids_.reserve(n);
        boxes_.reserve(n);
        features_.reserve(n * dim_);
    }

    void add(uint64_t image_id, uint32_t region_id, const Box& box, std::span<const float> feature);

    uint64_t image_id(size_t i) const { return image_ids_[i]; }
    uint32_t region_id(size_t i) const { return region_ids_[i]; }
    const Box& box(size_t i) const { return boxes_[i]; }
    std::span<const float> feature(size_t i) const {
        return std::span<const float>(features_.data() + i * dim_, dim_);
    }
    const float* feature_data() const { return features_.data(); }

    RegionFeature at(size_t i) const {
        return RegionFeature{image_ids_[i], region_ids_[i], boxes_[i],
                             std::vector<float>(feature(i).begin(), feature(i).end())};
    }

private:
    size_t dim_ = 0;
    std::vector<uint64_t> image_ids_;
    std::vector<uint32_t> region_ids_;
    std::vector<Box> boxes_;
    std::vector<float> features_;
};

// QARF container: magic "QARF", version u32, D_feat u32, count u64, then
// per record image_id u64, region_id u32, box 4xf32, feature D_feat x f32.
// Little-endian throughout.
FeatureSet read_feature_file(const std::string& path);
void write_feature_file(const std::string& path, const FeatureSet& features);

// Streaming variant for index building; `visit` sees records in file order.
void for_each_feature_record(const std::string& path,
                             const std::function<void(const RegionFeature&)>& visit);

} // namespace qar
