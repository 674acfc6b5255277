#include "qar/detector.hpp"

#include <algorithm>
#include <cmath>

#include "binio.hpp"
#include "qar/error.hpp"
#include "qar/rng.hpp"

namespace qar {

namespace {

constexpr char kMagic[4] = {'Q', 'A', 'R', 'W'};
constexpr uint32_t kVersion = 1;

void check_dims(size_t embed_dim, size_t feature_dim, size_t hidden_dim) {
    if (embed_dim == 0 || feature_dim == 0 || hidden_dim == 0) {
        fail(ErrorCode::InvalidArgument, "generator dims must be positive");
    }
}

void write_f32(binio::Writer& out, const std::vector<double>& values) {
    std::vector<float> tmp(values.size());
    std::transform(values.begin(), values.end(), tmp.begin(),
                   [](double x) { return static_cast<float>(x); });
    out.write_array(tmp.data(), tmp.size());
}

void read_f32(binio::Reader& in, std::vector<double>& values, size_t count) {
    std::vector<float> tmp(count);
    in.read_array(tmp.data(), count);
    values.assign(tmp.begin(), tmp.end());
}

} // namespace

GeneratorParams GeneratorParams::zeros(size_t embed_dim, size_t feature_dim, size_t hidden_dim) {
    check_dims(embed_dim, feature_dim, hidden_dim);
    GeneratorParams p;
    p.embed_dim = embed_dim;
    p.feature_dim = feature_dim;
    p.hidden_dim = hidden_dim;
    p.W.assign(feature_dim * embed_dim, 0.0);
    p.H1.assign(hidden_dim * embed_dim, 0.0);
    p.b1.assign(hidden_dim, 0.0);
    for (int k = 0; k < 4; ++k) {
        p.H2[k].assign(feature_dim * hidden_dim, 0.0);
        p.b2[k].assign(feature_dim, 0.0);
    }
    return p;
}

GeneratorParams GeneratorParams::random_init(size_t embed_dim, size_t feature_dim,
                                             size_t hidden_dim, uint64_t seed) {
    GeneratorParams p = zeros(embed_dim, feature_dim, hidden_dim);
    Rng rng(seed);
    double w_scale = 0.01;
    double h1_scale = 1.0 / std::sqrt(static_cast<double>(embed_dim));
    double h2_scale = 0.01;
    for (double& x : p.W) x = w_scale * rng.next_gaussian();
    for (double& x : p.H1) x = h1_scale * rng.next_gaussian();
    for (int k = 0; k < 4; ++k) {
        for (double& x : p.H2[k]) x = h2_scale * rng.next_gaussian();
    }
    return p;
}

void GeneratorParams::validate() const {
    check_dims(embed_dim, feature_dim, hidden_dim);
    auto want = [&](size_t got, size_t expected, const char* name) {
        if (got != expected) {
            fail(ErrorCode::InvalidArgument,
                 std::string("generator tensor ") + name + " has inconsistent shape");
        }
    };
    want(W.size(), feature_dim * embed_dim, "W");
    want(H1.size(), hidden_dim * embed_dim, "H1");
    want(b1.size(), hidden_dim, "b1");
    for (int k = 0; k < 4; ++k) {
        want(H2[k].size(), feature_dim * hidden_dim, "H2");
        want(b2[k].size(), feature_dim, "b2");
    }
}

Detector generate_detector(const GeneratorParams& params, const PhraseEmbedding& v) {
    if (v.v.size() != params.embed_dim) {
        fail(ErrorCode::InvalidArgument,
             "embedding length " + std::to_string(v.v.size()) + " does not match generator dim " +
                 std::to_string(params.embed_dim));
    }
    const size_t d = params.embed_dim;
    const size_t f = params.feature_dim;
    const size_t h = params.hidden_dim;

    Detector det;
    det.w_c.assign(f, 0.0);
    for (size_t i = 0; i < f; ++i) {
        const double* row = params.W.data() + i * d;
        double acc = 0.0;
        for (size_t j = 0; j < d; ++j) acc += row[j] * v.v[j];
        det.w_c[i] = acc;
    }

    std::vector<double> hidden(h);
    for (size_t i = 0; i < h; ++i) {
        const double* row = params.H1.data() + i * d;
        double acc = params.b1[i];
        for (size_t j = 0; j < d; ++j) acc += row[j] * v.v[j];
        hidden[i] = acc > 0.0 ? acc : 0.0;
    }

    for (int k = 0; k < 4; ++k) {
        det.w_r[k].assign(f, 0.0);
        const auto& H2 = params.H2[k];
        const auto& b2 = params.b2[k];
        for (size_t i = 0; i < f; ++i) {
            const double* row = H2.data() + i * h;
            double acc = b2[i];
            for (size_t j = 0; j < h; ++j) acc += row[j] * hidden[j];
            det.w_r[k][i] = acc;
        }
    }
    return det;
}

double score_region(std::span<const double> w_c, std::span<const float> feature) {
    if (w_c.size() != feature.size()) {
        fail(ErrorCode::InvalidArgument, "classifier/feature length mismatch");
    }
    double acc = 0.0;
    for (size_t i = 0; i < w_c.size(); ++i) acc += w_c[i] * static_cast<double>(feature[i]);
    return acc;
}

double score_region(const Detector& det, std::span<const float> feature) {
    return score_region(std::span<const double>(det.w_c), feature);
}

BoxDeltas predict_deltas(const Detector& det, std::span<const float> feature) {
    BoxDeltas d;
    double* out[4] = {&d.dx, &d.dy, &d.dw, &d.dh};
    for (int k = 0; k < 4; ++k) {
        if (det.w_r[k].size() != feature.size()) {
            fail(ErrorCode::InvalidArgument, "regressor/feature length mismatch");
        }
        double acc = 0.0;
        for (size_t i = 0; i < feature.size(); ++i) {
            acc += det.w_r[k][i] * static_cast<double>(feature[i]);
        }
        *out[k] = acc;
    }
    return d;
}

BoxDeltas predict_deltas(const Detector& det, std::span<const double> feature) {
    BoxDeltas d;
    double* out[4] = {&d.dx, &d.dy, &d.dw, &d.dh};
    for (int k = 0; k < 4; ++k) {
        if (det.w_r[k].size() != feature.size()) {
            fail(ErrorCode::InvalidArgument, "regressor/feature length mismatch");
        }
        double acc = 0.0;
        for (size_t i = 0; i < feature.size(); ++i) acc += det.w_r[k][i] * feature[i];
        *out[k] = acc;
    }
    return d;
}

GeneratorParams load_generator_params(const std::string& path) {
    binio::Reader in(path);
    in.expect_magic(kMagic);
    uint32_t version = in.read<uint32_t>();
    if (version != kVersion) {
        fail(ErrorCode::Format, path + ": unsupported version " + std::to_string(version));
    }
    uint32_t embed_dim = in.read<uint32_t>();
    uint32_t feature_dim = in.read<uint32_t>();
    uint32_t hidden_dim = in.read<uint32_t>();
    GeneratorParams p = GeneratorParams::zeros(embed_dim, feature_dim, hidden_dim);
    read_f32(in, p.W, p.W.size());
    read_f32(in, p.H1, p.H1.size());
    read_f32(in, p.b1, p.b1.size());
    for (int k = 0; k < 4; ++k) read_f32(in, p.H2[k], p.H2[k].size());
    for (int k = 0; k < 4; ++k) read_f32(in, p.b2[k], p.b2[k].size());
    if (!in.at_eof()) fail(ErrorCode::Format, path + ": trailing bytes");
    return p;
}

void save_generator_params(const std::string& path, const GeneratorParams& params) {
    params.validate();
    binio::Writer out(path);
    out.write_magic(kMagic);
    out.write<uint32_t>(kVersion);
    out.write<uint32_t>(static_cast<uint32_t>(params.embed_dim));
    out.write<uint32_t>(static_cast<uint32_t>(params.feature_dim));
    out.write<uint32_t>(static_cast<uint32_t>(params.hidden_dim));
    write_f32(out, params.W);
    write_f32(out, params.H1);
    write_f32(out, params.b1);
    for (int k = 0; k < 4; ++k) write_f32(out, params.H2[k]);
    for (int k = 0; k < 4; ++k) write_f32(out, params.b2[k]);
    out.close();
}

} // namespace qar
