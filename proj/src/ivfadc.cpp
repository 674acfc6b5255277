#include "qar/ivfadc.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include <Eigen/Core>

#include "binio.hpp"
#include "parallel.hpp"
#include "qar/error.hpp"
#include "qar/rng.hpp"

namespace qar {

namespace {

constexpr char kMagic[4] = {'Q', 'A', 'R', 'X'};
constexpr uint32_t kVersion = 1;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;

constexpr size_t kAssignChunk = 4096;

// Nearest centroid per point; ties go to the lowest centroid index. Also
// accumulates the squared-distance distortion, reduced in chunk order.
void assign_points(const double* points, size_t n, size_t dim, const std::vector<double>& centroids,
                   size_t k, std::vector<uint32_t>& assign, std::vector<double>& dist2) {
    ConstMap cmat(centroids.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(dim));
    Eigen::VectorXd cnorm2 = cmat.rowwise().squaredNorm();

    par::for_chunks(n, kAssignChunk, [&](size_t begin, size_t end, size_t) {
        ConstMap pmat(points + begin * dim, static_cast<Eigen::Index>(end - begin),
                      static_cast<Eigen::Index>(dim));
        RowMat dots = pmat * cmat.transpose(); // (chunk) x k
        for (size_t i = begin; i < end; ++i) {
            const auto row = dots.row(static_cast<Eigen::Index>(i - begin));
            double best = row(0) - 0.5 * cnorm2(0);
            uint32_t best_j = 0;
            for (size_t j = 1; j < k; ++j) {
                double score = row(static_cast<Eigen::Index>(j)) - 0.5 * cnorm2(static_cast<Eigen::Index>(j));
                if (score > best) {
                    best = score;
                    best_j = static_cast<uint32_t>(j);
                }
            }
            assign[i] = best_j;
            double pnorm2 = pmat.row(static_cast<Eigen::Index>(i - begin)).squaredNorm();
            dist2[i] = std::max(0.0, pnorm2 - 2.0 * row(static_cast<Eigen::Index>(best_j)) +
                                         cnorm2(static_cast<Eigen::Index>(best_j)));
        }
    });
}

size_t pick_weighted(const std::vector<double>& weights, double total, double u) {
    double threshold = u * total;
    double cum = 0.0;
    for (size_t i = 0; i < weights.size(); ++i) {
        cum += weights[i];
        if (threshold < cum) return i;
    }
    // numeric slack: fall back to the last positive weight
    for (size_t i = weights.size(); i > 0; --i) {
        if (weights[i - 1] > 0.0) return i - 1;
    }
    return weights.size() - 1;
}

size_t round_to_power_of_two(double x) {
    if (x <= 1.0) return 1;
    double l = std::log2(x);
    return static_cast<size_t>(1) << static_cast<size_t>(std::lround(l));
}

// Deterministic sample of `take` distinct indices out of n (partial shuffle).
std::vector<size_t> sample_indices(size_t n, size_t take, Rng& rng) {
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (take >= n) return idx;
    for (size_t i = 0; i < take; ++i) {
        size_t j = i + static_cast<size_t>(rng.next_below(n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(take);
    std::sort(idx.begin(), idx.end());
    return idx;
}

struct ScoredPosting {
    double score;
    uint64_t image_id;
    uint32_t region_id;
    uint32_t list;
    uint64_t offset;
};

void sort_and_truncate(std::vector<ScoredPosting>& hits, size_t topk) {
    auto better = [](const ScoredPosting& a, const ScoredPosting& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.image_id != b.image_id) return a.image_id < b.image_id;
        return a.region_id < b.region_id;
    };
    if (hits.size() > topk) {
        std::nth_element(hits.begin(), hits.begin() + static_cast<ptrdiff_t>(topk), hits.end(),
                         better);
        hits.resize(topk);
    }
    std::sort(hits.begin(), hits.end(), better);
}

} // namespace

KmeansResult kmeans(const double* points, size_t count, size_t dim, size_t k, size_t iterations,
                    uint64_t seed) {
    if (count == 0) fail(ErrorCode::InvalidArgument, "kmeans: no points");
    if (dim == 0) fail(ErrorCode::InvalidArgument, "kmeans: zero dimension");
    if (k == 0) fail(ErrorCode::InvalidArgument, "kmeans: k must be >= 1");

    KmeansResult result;
    result.k = k;
    result.dim = dim;
    result.centroids.assign(k * dim, 0.0);

    Rng rng(seed);

    // k-means++ seeding
    ConstMap pmat(points, static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
    Eigen::VectorXd pnorm2 = pmat.rowwise().squaredNorm();
    std::vector<double> min_dist2(count, std::numeric_limits<double>::infinity());
    size_t first = static_cast<size_t>(rng.next_below(count));
    std::memcpy(result.centroids.data(), points + first * dim, dim * sizeof(double));
    size_t chosen = 1;
    Eigen::VectorXd dots(static_cast<Eigen::Index>(count));
    auto update_min_dist = [&](size_t centroid_idx) {
        Eigen::Map<const Eigen::VectorXd> c(result.centroids.data() + centroid_idx * dim,
                                            static_cast<Eigen::Index>(dim));
        dots.noalias() = pmat * c;
        double cnorm2 = c.squaredNorm();
        for (size_t i = 0; i < count; ++i) {
            double d = std::max(0.0, pnorm2(static_cast<Eigen::Index>(i)) -
                                         2.0 * dots(static_cast<Eigen::Index>(i)) + cnorm2);
            if (d < min_dist2[i]) min_dist2[i] = d;
        }
    };
    update_min_dist(0);
    while (chosen < k) {
        double total = std::accumulate(min_dist2.begin(), min_dist2.end(), 0.0);
        if (total <= 0.0) {
            // fewer distinct points than centroids: duplicate points to fill
            result.padded = true;
            for (; chosen < k; ++chosen) {
                size_t src = chosen % count;
                std::memcpy(result.centroids.data() + chosen * dim, points + src * dim,
                            dim * sizeof(double));
            }
            break;
        }
        size_t pick = pick_weighted(min_dist2, total, rng.next_double());
        std::memcpy(result.centroids.data() + chosen * dim, points + pick * dim,
                    dim * sizeof(double));
        update_min_dist(chosen);
        ++chosen;
    }

    // Lloyd iterations
    std::vector<uint32_t> assign(count, 0);
    std::vector<uint32_t> prev_assign;
    std::vector<double> dist2(count, 0.0);
    std::vector<double> sums(k * dim);
    std::vector<size_t> sizes(k);

    for (size_t iter = 0; iter < iterations; ++iter) {
        assign_points(points, count, dim, result.centroids, k, assign, dist2);
        result.distortion_history.push_back(
            std::accumulate(dist2.begin(), dist2.end(), 0.0));
        if (iter > 0 && assign == prev_assign) break;
        prev_assign = assign;

        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(sizes.begin(), sizes.end(), 0);
        for (size_t i = 0; i < count; ++i) {
            double* dst = sums.data() + assign[i] * dim;
            const double* p = points + i * dim;
            for (size_t j = 0; j < dim; ++j) dst[j] += p[j];
            ++sizes[assign[i]];
        }

        std::vector<size_t> empties;
        for (size_t c = 0; c < k; ++c) {
            if (sizes[c] == 0) {
                empties.push_back(c);
                continue;
            }
            double inv = 1.0 / static_cast<double>(sizes[c]);
            double* dst = result.centroids.data() + c * dim;
            const double* src = sums.data() + c * dim;
            for (size_t j = 0; j < dim; ++j) dst[j] = src[j] * inv;
        }
        if (!empties.empty()) {
            // re-seed each empty cluster from the farthest unclaimed point
            std::vector<size_t> order(count);
            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
                if (dist2[a] != dist2[b]) return dist2[a] > dist2[b];
                return a < b;
            });
            size_t next = 0;
            for (size_t c : empties) {
                if (next >= count) break;
                std::memcpy(result.centroids.data() + c * dim, points + order[next] * dim,
                            dim * sizeof(double));
                ++next;
            }
        }
    }

    return result;
}

KmeansResult kmeans(const std::vector<std::vector<double>>& points, size_t k, size_t iterations,
                    uint64_t seed) {
    if (points.empty()) fail(ErrorCode::InvalidArgument, "kmeans: no points");
    size_t dim = points[0].size();
    std::vector<double> flat;
    flat.reserve(points.size() * dim);
    for (const auto& p : points) {
        if (p.size() != dim) fail(ErrorCode::InvalidArgument, "kmeans: ragged points");
        flat.insert(flat.end(), p.begin(), p.end());
    }
    return kmeans(flat.data(), points.size(), dim, k, iterations, seed);
}

void ProductQuantizer::encode(std::span<const double> residual, uint8_t* code) const {
    if (residual.size() != dim()) {
        fail(ErrorCode::InvalidArgument, "pq encode: residual length mismatch");
    }
    for (size_t sub = 0; sub < m; ++sub) {
        const double* r = residual.data() + sub * dsub;
        double best = std::numeric_limits<double>::infinity();
        size_t best_i = 0;
        for (size_t i = 0; i < ksub; ++i) {
            const float* cw = codeword(sub, i);
            double d = 0.0;
            for (size_t j = 0; j < dsub; ++j) {
                double diff = r[j] - static_cast<double>(cw[j]);
                d += diff * diff;
            }
            if (d < best) {
                best = d;
                best_i = i;
            }
        }
        code[sub] = static_cast<uint8_t>(best_i);
    }
}

std::vector<uint8_t> ProductQuantizer::encode(std::span<const double> residual) const {
    std::vector<uint8_t> code(m);
    encode(residual, code.data());
    return code;
}

std::vector<double> ProductQuantizer::decode(std::span<const uint8_t> code) const {
    if (code.size() != m) fail(ErrorCode::InvalidArgument, "pq decode: code length mismatch");
    std::vector<double> out(dim());
    for (size_t sub = 0; sub < m; ++sub) {
        if (code[sub] >= ksub) {
            fail(ErrorCode::InvalidArgument, "pq decode: code entry " + std::to_string(code[sub]) +
                                                 " out of range (ksub=" + std::to_string(ksub) + ")");
        }
        const float* cw = codeword(sub, code[sub]);
        for (size_t j = 0; j < dsub; ++j) out[sub * dsub + j] = static_cast<double>(cw[j]);
    }
    return out;
}

size_t IvfadcIndex::total() const {
    size_t n = 0;
    for (const auto& list : lists) n += list.size();
    return n;
}

void IvfadcIndex::validate() const {
    if (coarse.nlist != lists.size()) {
        fail(ErrorCode::Internal, "index list count does not match coarse quantizer");
    }
    if (pq.dim() != coarse.dim) {
        fail(ErrorCode::Internal, "product quantizer does not span the feature dimension");
    }
    for (const auto& list : lists) {
        size_t n = list.size();
        if (list.region_ids.size() != n || list.boxes.size() != n || list.codes.size() != n * pq.m) {
            fail(ErrorCode::Internal, "inverted list arrays disagree on length");
        }
        for (uint8_t c : list.codes) {
            if (c >= pq.ksub) fail(ErrorCode::Internal, "posting code out of codebook range");
        }
    }
}

std::vector<double> IvfadcIndex::reconstruct(size_t list, size_t offset) const {
    if (list >= lists.size() || offset >= lists[list].size()) {
        fail(ErrorCode::InvalidArgument, "reconstruct: posting out of range");
    }
    std::vector<double> out =
        pq.decode(std::span<const uint8_t>(lists[list].codes.data() + offset * pq.m, pq.m));
    auto centroid = coarse.centroid(list);
    for (size_t j = 0; j < out.size(); ++j) out[j] += static_cast<double>(centroid[j]);
    return out;
}

IvfadcIndex build_index(const FeatureSet& features, const BuildOptions& options) {
    const size_t n = features.size();
    const size_t dim = features.dim();
    if (n == 0) fail(ErrorCode::InvalidArgument, "cannot build an index from zero features");

    size_t nlist = options.nlist;
    if (nlist == 0) nlist = std::min(round_to_power_of_two(std::sqrt(static_cast<double>(n))), n);
    const size_t m = options.m;
    const size_t ksub = options.ksub;
    if (nlist < 1) fail(ErrorCode::InvalidArgument, "nlist must be >= 1");
    if (m == 0 || dim % m != 0) {
        fail(ErrorCode::InvalidArgument, "m must divide the feature dimension");
    }
    if (ksub < 1 || ksub > 256) fail(ErrorCode::InvalidArgument, "ksub must be in [1, 256]");
    if (n < nlist || n < ksub) {
        fail(ErrorCode::InvalidArgument,
             "not enough features: need at least max(nlist, ksub) = " +
                 std::to_string(std::max(nlist, ksub)));
    }
    const size_t dsub = dim / m;

    Rng sample_rng(Rng::derive(options.seed, 0x5a3c).next_u64());

    // Coarse quantizer, trained on a capped sample.
    std::vector<double> coarse_centroids;
    {
        size_t cap = nlist * options.max_points_per_centroid;
        std::vector<double> sample;
        size_t sample_n;
        if (options.max_points_per_centroid > 0 && n > cap) {
            auto idx = sample_indices(n, cap, sample_rng);
            sample_n = idx.size();
            sample.resize(sample_n * dim);
            for (size_t i = 0; i < idx.size(); ++i) {
                auto f = features.feature(idx[i]);
                for (size_t j = 0; j < dim; ++j) sample[i * dim + j] = static_cast<double>(f[j]);
            }
        } else {
            sample_n = n;
            sample.resize(n * dim);
            const float* src = features.feature_data();
            for (size_t i = 0; i < n * dim; ++i) sample[i] = static_cast<double>(src[i]);
        }
        KmeansResult km = kmeans(sample.data(), sample_n, dim, nlist, options.kmeans_iterations,
                                 Rng::derive(options.seed, 1).next_u64());
        coarse_centroids = std::move(km.centroids);
    }

    IvfadcIndex index;
    index.coarse.nlist = nlist;
    index.coarse.dim = dim;
    index.coarse.centroids.assign(coarse_centroids.begin(), coarse_centroids.end());
    // canonical centroids are the float32 values that get serialized
    std::vector<double> canon(nlist * dim);
    for (size_t i = 0; i < canon.size(); ++i) {
        canon[i] = static_cast<double>(index.coarse.centroids[i]);
    }

    // Assign every feature to its nearest coarse centroid.
    std::vector<uint32_t> assign(n);
    {
        std::vector<double> dist2(n);
        std::vector<double> pts;
        // chunked conversion to double to keep peak memory bounded
        const size_t conv_chunk = 65536;
        pts.resize(std::min(n, conv_chunk) * dim);
        for (size_t begin = 0; begin < n; begin += conv_chunk) {
            size_t end = std::min(begin + conv_chunk, n);
            const float* src = features.feature_data() + begin * dim;
            for (size_t i = 0; i < (end - begin) * dim; ++i) pts[i] = static_cast<double>(src[i]);
            std::vector<uint32_t> sub_assign(end - begin);
            std::vector<double> sub_dist(end - begin);
            assign_points(pts.data(), end - begin, dim, canon, nlist, sub_assign, sub_dist);
            std::copy(sub_assign.begin(), sub_assign.end(), assign.begin() + static_cast<ptrdiff_t>(begin));
        }
    }

    // Product quantizer on residuals, per-subspace k-means on a capped sample.
    index.pq.m = m;
    index.pq.ksub = ksub;
    index.pq.dsub = dsub;
    index.pq.codebooks.assign(m * ksub * dsub, 0.0f);
    {
        size_t cap = ksub * options.max_points_per_centroid;
        std::vector<size_t> idx;
        if (options.max_points_per_centroid > 0 && n > cap) {
            idx = sample_indices(n, cap, sample_rng);
        } else {
            idx.resize(n);
            std::iota(idx.begin(), idx.end(), 0);
        }
        std::vector<double> sub_points(idx.size() * dsub);
        for (size_t sub = 0; sub < m; ++sub) {
            for (size_t i = 0; i < idx.size(); ++i) {
                auto f = features.feature(idx[i]);
                const double* c = canon.data() + assign[idx[i]] * dim + sub * dsub;
                for (size_t j = 0; j < dsub; ++j) {
                    sub_points[i * dsub + j] =
                        static_cast<double>(f[sub * dsub + j]) - c[j];
                }
            }
            KmeansResult km = kmeans(sub_points.data(), idx.size(), dsub, ksub,
                                     options.kmeans_iterations,
                                     Rng::derive(options.seed, 2 + sub).next_u64());
            float* dst = index.pq.codebooks.data() + sub * ksub * dsub;
            for (size_t i = 0; i < ksub * dsub; ++i) dst[i] = static_cast<float>(km.centroids[i]);
        }
    }

    // Encode every residual and scatter postings into the inverted lists.
    std::vector<uint8_t> codes(n * m);
    par::for_chunks(n, kAssignChunk, [&](size_t begin, size_t end, size_t) {
        std::vector<double> residual(dim);
        for (size_t i = begin; i < end; ++i) {
            auto f = features.feature(i);
            const double* c = canon.data() + assign[i] * dim;
            for (size_t j = 0; j < dim; ++j) residual[j] = static_cast<double>(f[j]) - c[j];
            index.pq.encode(residual, codes.data() + i * m);
        }
    });

    index.lists.resize(nlist);
    std::vector<size_t> list_sizes(nlist, 0);
    for (size_t i = 0; i < n; ++i) ++list_sizes[assign[i]];
    for (size_t l = 0; l < nlist; ++l) {
        index.lists[l].image_ids.reserve(list_sizes[l]);
        index.lists[l].region_ids.reserve(list_sizes[l]);
        index.lists[l].boxes.reserve(list_sizes[l]);
        index.lists[l].codes.reserve(list_sizes[l] * m);
    }
    for (size_t i = 0; i < n; ++i) {
        InvertedList& list = index.lists[assign[i]];
        list.image_ids.push_back(features.image_id(i));
        list.region_ids.push_back(features.region_id(i));
        list.boxes.push_back(features.box(i));
        list.codes.insert(list.codes.end(), codes.begin() + static_cast<ptrdiff_t>(i * m),
                          codes.begin() + static_cast<ptrdiff_t>((i + 1) * m));
    }

    index.validate();
    return index;
}

std::vector<SearchHit> search(const IvfadcIndex& index, std::span<const double> w_c, size_t topk,
                              size_t nprobe) {
    const size_t dim = index.dim();
    const size_t nlist = index.coarse.nlist;
    if (w_c.size() != dim) fail(ErrorCode::InvalidArgument, "classifier length mismatch");
    if (topk == 0) fail(ErrorCode::InvalidArgument, "topk must be >= 1");
    if (nprobe < 1 || nprobe > nlist) {
        fail(ErrorCode::InvalidArgument, "nprobe must be in [1, nlist]");
    }
    if (index.total() == 0) fail(ErrorCode::Empty, "index holds no postings");

    // probe the lists with the highest classifier-centroid inner product
    std::vector<std::pair<double, size_t>> probes(nlist);
    for (size_t l = 0; l < nlist; ++l) {
        auto c = index.coarse.centroid(l);
        double dot = 0.0;
        for (size_t j = 0; j < dim; ++j) dot += w_c[j] * static_cast<double>(c[j]);
        probes[l] = {dot, l};
    }
    std::sort(probes.begin(), probes.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    probes.resize(nprobe);

    // inner-product lookup tables, one per subspace
    const size_t m = index.pq.m;
    const size_t ksub = index.pq.ksub;
    const size_t dsub = index.pq.dsub;
    std::vector<double> table(m * ksub);
    for (size_t sub = 0; sub < m; ++sub) {
        const double* w = w_c.data() + sub * dsub;
        for (size_t i = 0; i < ksub; ++i) {
            const float* cw = index.pq.codeword(sub, i);
            double dot = 0.0;
            for (size_t j = 0; j < dsub; ++j) dot += w[j] * static_cast<double>(cw[j]);
            table[sub * ksub + i] = dot;
        }
    }

    std::vector<ScoredPosting> hits;
    for (const auto& [coarse_dot, l] : probes) {
        const InvertedList& list = index.lists[l];
        const uint8_t* codes = list.codes.data();
        for (size_t p = 0; p < list.size(); ++p) {
            double score = coarse_dot;
            const uint8_t* code = codes + p * m;
            for (size_t sub = 0; sub < m; ++sub) score += table[sub * ksub + code[sub]];
            hits.push_back(ScoredPosting{score, list.image_ids[p], list.region_ids[p],
                                         static_cast<uint32_t>(l), p});
        }
    }
    sort_and_truncate(hits, topk);

    std::vector<SearchHit> out;
    out.reserve(hits.size());
    for (const auto& h : hits) {
        out.push_back(SearchHit{h.image_id, h.region_id, index.lists[h.list].boxes[h.offset],
                                h.score, h.list, h.offset});
    }
    return out;
}

std::vector<SearchHit> search_exact(const FeatureSet& features, std::span<const double> w_c,
                                    size_t topk) {
    if (features.empty()) fail(ErrorCode::Empty, "no features to scan");
    if (w_c.size() != features.dim()) fail(ErrorCode::InvalidArgument, "classifier length mismatch");
    if (topk == 0) fail(ErrorCode::InvalidArgument, "topk must be >= 1");

    std::vector<ScoredPosting> hits(features.size());
    const size_t dim = features.dim();
    par::for_chunks(features.size(), kAssignChunk, [&](size_t begin, size_t end, size_t) {
        for (size_t i = begin; i < end; ++i) {
            const float* f = features.feature_data() + i * dim;
            double score = 0.0;
            for (size_t j = 0; j < dim; ++j) score += w_c[j] * static_cast<double>(f[j]);
            hits[i] = ScoredPosting{score, features.image_id(i), features.region_id(i), 0, i};
        }
    });
    sort_and_truncate(hits, topk);

    std::vector<SearchHit> out;
    out.reserve(hits.size());
    for (const auto& h : hits) {
        out.push_back(
            SearchHit{h.image_id, h.region_id, features.box(h.offset), h.score, 0, h.offset});
    }
    return out;
}

IvfadcIndex load_index(const std::string& path) {
    binio::Reader in(path);
    in.expect_magic(kMagic);
    uint32_t version = in.read<uint32_t>();
    if (version != kVersion) {
        fail(ErrorCode::Format, path + ": unsupported version " + std::to_string(version));
    }
    uint32_t dim = in.read<uint32_t>();
    uint32_t nlist = in.read<uint32_t>();
    uint32_t m = in.read<uint32_t>();
    uint32_t ksub = in.read<uint32_t>();
    uint64_t total = in.read<uint64_t>();
    if (dim == 0 || nlist == 0 || m == 0 || dim % m != 0 || ksub == 0 || ksub > 256) {
        fail(ErrorCode::Format, path + ": inconsistent header");
    }

    IvfadcIndex index;
    index.coarse.nlist = nlist;
    index.coarse.dim = dim;
    index.coarse.centroids.resize(static_cast<size_t>(nlist) * dim);
    in.read_array(index.coarse.centroids.data(), index.coarse.centroids.size());
    index.pq.m = m;
    index.pq.ksub = ksub;
    index.pq.dsub = dim / m;
    index.pq.codebooks.resize(static_cast<size_t>(m) * ksub * index.pq.dsub);
    in.read_array(index.pq.codebooks.data(), index.pq.codebooks.size());

    index.lists.resize(nlist);
    uint64_t seen = 0;
    for (uint32_t l = 0; l < nlist; ++l) {
        uint64_t len = in.read<uint64_t>();
        InvertedList& list = index.lists[l];
        list.image_ids.resize(len);
        list.region_ids.resize(len);
        list.boxes.resize(len);
        list.codes.resize(len * m);
        for (uint64_t p = 0; p < len; ++p) {
            list.image_ids[p] = in.read<uint64_t>();
            list.region_ids[p] = in.read<uint32_t>();
            float b[4];
            in.read_array(b, 4);
            list.boxes[p] = Box{b[0], b[1], b[2], b[3]};
            if (!list.boxes[p].valid()) {
                fail(ErrorCode::Format, path + ": invalid posting box in list " + std::to_string(l));
            }
            in.read_array(list.codes.data() + p * m, m);
        }
        seen += len;
    }
    if (seen != total) {
        fail(ErrorCode::Format, path + ": posting count mismatch (header " + std::to_string(total) +
                                    ", lists " + std::to_string(seen) + ")");
    }
    if (!in.at_eof()) fail(ErrorCode::Format, path + ": trailing bytes");
    index.validate();
    return index;
}

void save_index(const std::string& path, const IvfadcIndex& index) {
    index.validate();
    binio::Writer out(path);
    out.write_magic(kMagic);
    out.write<uint32_t>(kVersion);
    out.write<uint32_t>(static_cast<uint32_t>(index.coarse.dim));
    out.write<uint32_t>(static_cast<uint32_t>(index.coarse.nlist));
    out.write<uint32_t>(static_cast<uint32_t>(index.pq.m));
    out.write<uint32_t>(static_cast<uint32_t>(index.pq.ksub));
    out.write<uint64_t>(index.total());
    out.write_array(index.coarse.centroids.data(), index.coarse.centroids.size());
    out.write_array(index.pq.codebooks.data(), index.pq.codebooks.size());
    for (const auto& list : index.lists) {
        out.write<uint64_t>(list.size());
        for (size_t p = 0; p < list.size(); ++p) {
            out.write<uint64_t>(list.image_ids[p]);
            out.write<uint32_t>(list.region_ids[p]);
            const Box& b = list.boxes[p];
            float bf[4] = {static_cast<float>(b.x1), static_cast<float>(b.y1),
                           static_cast<float>(b.x2), static_cast<float>(b.y2)};
            out.write_array(bf, 4);
            out.write_array(list.codes.data() + p * index.pq.m, index.pq.m);
        }
    }
    out.close();
}

} // namespace qar
