#include "qar/features.hpp"

#include "binio.hpp"

namespace qar {

namespace {

constexpr char kMagic[4] = {'Q', 'A', 'R', 'F'};
constexpr uint32_t kVersion = 1;

struct RecordHeader {
    uint64_t image_id;
    uint32_t region_id;
    float box[4];
};

Box to_box(const float b[4], const std::string& path, uint64_t record) {
    Box box{b[0], b[1], b[2], b[3]};
    if (!box.valid()) {
        fail(ErrorCode::Format, path + ": invalid box in record " + std::to_string(record));
    }
    return box;
}

} // namespace

void FeatureSet::add(uint64_t image_id, uint32_t region_id, const Box& box,
                     std::span<const float> feature) {
    if (feature.size() != dim_) {
        fail(ErrorCode::InvalidArgument, "feature length " + std::to_string(feature.size()) +
                                             " does not match set dim " + std::to_string(dim_));
    }
    box.require_valid();
    image_ids_.push_back(image_id);
    region_ids_.push_back(region_id);
    boxes_.push_back(box);
    features_.insert(features_.end(), feature.begin(), feature.end());
}

FeatureSet read_feature_file(const std::string& path) {
    binio::Reader in(path);
    in.expect_magic(kMagic);
    uint32_t version = in.read<uint32_t>();
    if (version != kVersion) {
        fail(ErrorCode::Format, path + ": unsupported version " + std::to_string(version));
    }
    uint32_t dim = in.read<uint32_t>();
    uint64_t count = in.read<uint64_t>();
    if (dim == 0) fail(ErrorCode::Format, path + ": zero feature dimension");

    FeatureSet set(dim);
    set.reserve(count);
    std::vector<float> feature(dim);
    for (uint64_t i = 0; i < count; ++i) {
        uint64_t image_id = in.read<uint64_t>();
        uint32_t region_id = in.read<uint32_t>();
        float b[4];
        in.read_array(b, 4);
        in.read_array(feature.data(), dim);
        set.add(image_id, region_id, to_box(b, path, i), feature);
    }
    if (!in.at_eof()) {
        fail(ErrorCode::Format, path + ": trailing bytes after declared record count");
    }
    return set;
}

void write_feature_file(const std::string& path, const FeatureSet& features) {
    binio::Writer out(path);
    out.write_magic(kMagic);
    out.write<uint32_t>(kVersion);
    out.write<uint32_t>(static_cast<uint32_t>(features.dim()));
    out.write<uint64_t>(features.size());
    for (size_t i = 0; i < features.size(); ++i) {
        out.write<uint64_t>(features.image_id(i));
        out.write<uint32_t>(features.region_id(i));
        const Box& b = features.box(i);
        float bf[4] = {static_cast<float>(b.x1), static_cast<float>(b.y1),
                       static_cast<float>(b.x2), static_cast<float>(b.y2)};
        out.write_array(bf, 4);
        auto f = features.feature(i);
        out.write_array(f.data(), f.size());
    }
    out.close();
}

void for_each_feature_record(const std::string& path,
                             const std::function<void(const RegionFeature&)>& visit) {
    binio::Reader in(path);
    in.expect_magic(kMagic);
    uint32_t version = in.read<uint32_t>();
    if (version != kVersion) {
        fail(ErrorCode::Format, path + ": unsupported version " + std::to_string(version));
    }
    uint32_t dim = in.read<uint32_t>();
    uint64_t count = in.read<uint64_t>();
    RegionFeature rec;
    rec.feature.resize(dim);
    for (uint64_t i = 0; i < count; ++i) {
        rec.image_id = in.read<uint64_t>();
        rec.region_id = in.read<uint32_t>();
        float b[4];
        in.read_array(b, 4);
        in.read_array(rec.feature.data(), dim);
        rec.box = to_box(b, path, i);
        visit(rec);
    }
    if (!in.at_eof()) {
        fail(ErrorCode::Format, path + ": trailing bytes after declared record count");
    }
}

} // namespace qar
