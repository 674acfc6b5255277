#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qar/features.hpp"
#include "qar/geometry.hpp"

namespace qar {

struct KmeansResult {
    size_t k = 0;
    size_t dim = 0;
    std::vector<double> centroids;            // k x dim row-major
    std::vector<double> distortion_history;   // one entry per assignment pass
    bool padded = false;                      // filled with duplicates: fewer distinct points than k
};

// Lloyd's algorithm with k-means++ seeding. Empty clusters are re-seeded from
// the farthest points. Ties in assignment go to the lowest centroid index.
KmeansResult kmeans(const double* points, size_t count, size_t dim, size_t k, size_t iterations,
                    uint64_t seed);
KmeansResult kmeans(const std::vector<std::vector<double>>& points, size_t k, size_t iterations,
                    uint64_t seed);

struct CoarseQuantizer {
    size_t nlist = 0;
    size_t dim = 0;
    std::vector<float> centroids; // nlist x dim

    std::span<const float> centroid(size_t i) const {
        return std::span<const float>(centroids.data() + i * dim, dim);
    }
};

struct ProductQuantizer {
    size_t m = 0;    // subspaces
    size_t ksub = 0; // centroids per subspace, <= 256
    size_t dsub = 0; // dims per subspace
    std::vector<float> codebooks; // m x ksub x dsub

    size_t dim() const { return m * dsub; }
    const float* codeword(size_t sub, size_t idx) const {
        return codebooks.data() + (sub * ksub + idx) * dsub;
    }

    // Nearest codeword per subspace (Euclidean), one byte per subspace.
    void encode(std::span<const double> residual, uint8_t* code) const;
    std::vector<uint8_t> encode(std::span<const double> residual) const;
    // Concatenation of the selected codewords.
    std::vector<double> decode(std::span<const uint8_t> code) const;
};

struct InvertedList {
    std::vector<uint64_t> image_ids;
    std::vector<uint32_t> region_ids;
    std::vector<Box> boxes;
    std::vector<uint8_t> codes; // size() * m bytes

    size_t size() const { return image_ids.size(); }
};

struct IvfadcIndex {
    CoarseQuantizer coarse;
    ProductQuantizer pq;
    std::vector<InvertedList> lists;

    size_t dim() const { return coarse.dim; }
    size_t total() const;
    void validate() const;

    // centroid + decoded residual of one posting
    std::vector<double> reconstruct(size_t list, size_t offset) const;
};

struct BuildOptions {
    size_t nlist = 0;      // 0 = nearest power of two to sqrt(N)
    size_t m = 8;
    size_t ksub = 256;
    size_t kmeans_iterations = 25;
    uint64_t seed = 0;
    // Quantizer training subsamples above cap*k points, IVFADC practice.
    size_t max_points_per_centroid = 256;
};

IvfadcIndex build_index(const FeatureSet& features, const BuildOptions& options);

struct SearchHit {
    uint64_t image_id = 0;
    uint32_t region_id = 0;
    Box box;
    double score = 0.0;
    // locator for feature reconstruction: inverted list + offset for index
    // search, 0 + feature row for exact search
    uint32_t list = 0;
    uint64_t offset = 0;
};

// Scans the nprobe lists with the highest w_c . centroid, scores postings via
// the per-subspace inner-product tables, and returns the global top-k. Ties
// break by (image_id, region_id) ascending.
std::vector<SearchHit> search(const IvfadcIndex& index, std::span<const double> w_c, size_t topk,
                              size_t nprobe);

// Full scan of raw features, same ordering contract.
std::vector<SearchHit> search_exact(const FeatureSet& features, std::span<const double> w_c,
                                    size_t topk);

// QARX container (see README for the layout).
IvfadcIndex load_index(const std::string& path);
void save_index(const std::string& path, const IvfadcIndex& index);

} // namespace qar
