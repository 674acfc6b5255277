#include <algorithm>
#include <cmath>
#include <set>

#include <doctest.h>

#include "qar/error.hpp"
#include "qar/ivfadc.hpp"
#include "qar/rng.hpp"
#include "support.hpp"

using namespace qar;

TEST_SUITE_BEGIN("ivfadc");

namespace {

FeatureSet random_features(size_t n, size_t dim, uint64_t seed, size_t regions_per_image = 4) {
    Rng rng(seed);
    FeatureSet set(dim);
    std::vector<float> f(dim);
    for (size_t i = 0; i < n; ++i) {
        for (auto& x : f) x = static_cast<float>(rng.next_gaussian());
        Box box{0, 0, 10 + static_cast<double>(i % 7), 10 + static_cast<double>(i % 5)};
        set.add(i / regions_per_image, static_cast<uint32_t>(i % regions_per_image), box, f);
    }
    return set;
}

std::vector<double> random_query(size_t dim, uint64_t seed) {
    Rng rng(seed);
    std::vector<double> w(dim);
    for (auto& x : w) x = rng.next_gaussian();
    return w;
}

// independent scoring route: reconstructed vectors dotted with the query
std::vector<SearchHit> reconstruction_oracle(const IvfadcIndex& index,
                                             const std::vector<double>& w, size_t topk) {
    struct Entry {
        double score;
        uint64_t image_id;
        uint32_t region_id;
        uint32_t list;
        uint64_t offset;
    };
    std::vector<Entry> entries;
    for (size_t l = 0; l < index.lists.size(); ++l) {
        for (size_t p = 0; p < index.lists[l].size(); ++p) {
            std::vector<double> rec = index.reconstruct(l, p);
            double score = 0.0;
            for (size_t j = 0; j < rec.size(); ++j) score += w[j] * rec[j];
            entries.push_back(Entry{score, index.lists[l].image_ids[p],
                                    index.lists[l].region_ids[p], static_cast<uint32_t>(l), p});
        }
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.image_id != b.image_id) return a.image_id < b.image_id;
        return a.region_id < b.region_id;
    });
    if (entries.size() > topk) entries.resize(topk);
    std::vector<SearchHit> hits;
    for (const auto& e : entries) {
        hits.push_back(SearchHit{e.image_id, e.region_id, index.lists[e.list].boxes[e.offset],
                                 e.score, e.list, e.offset});
    }
    return hits;
}

} // namespace

TEST_CASE("kmeans separates two clean clusters") {
    std::vector<std::vector<double>> points;
    for (int i = 0; i < 10; ++i) points.push_back({0.0, 0.0});
    for (int i = 0; i < 10; ++i) points.push_back({10.0, 10.0});
    KmeansResult result = kmeans(points, 2, 10, 42);
    REQUIRE(result.k == 2);
    std::set<std::pair<double, double>> centroids = {
        {result.centroids[0], result.centroids[1]},
        {result.centroids[2], result.centroids[3]},
    };
    CHECK(centroids == std::set<std::pair<double, double>>{{0.0, 0.0}, {10.0, 10.0}});
    CHECK(result.distortion_history.back() == 0.0);
    CHECK_FALSE(result.padded);
}

TEST_CASE("kmeans with k = 1 returns the mean") {
    std::vector<std::vector<double>> points = {{1, 2}, {3, 4}, {5, 0}};
    KmeansResult result = kmeans(points, 1, 5, 7);
    CHECK(result.centroids[0] == doctest::Approx(3.0));
    CHECK(result.centroids[1] == doctest::Approx(2.0));
}

TEST_CASE("kmeans distortion never increases") {
    Rng rng(11);
    for (uint64_t seed = 0; seed < 4; ++seed) {
        std::vector<double> flat(200 * 6);
        for (auto& x : flat) x = rng.next_gaussian() * rng.uniform(0.5, 3.0);
        KmeansResult result = kmeans(flat.data(), 200, 6, 8, 15, seed);
        for (size_t i = 1; i < result.distortion_history.size(); ++i) {
            CHECK(result.distortion_history[i] <= result.distortion_history[i - 1] + 1e-9);
        }
    }
}

TEST_CASE("kmeans pads duplicated points and flags it") {
    std::vector<std::vector<double>> points(10, std::vector<double>{0.0, 0.0});
    KmeansResult result = kmeans(points, 2, 5, 3);
    CHECK(result.padded);
    CHECK(result.centroids == std::vector<double>{0, 0, 0, 0});
}

TEST_CASE("pq encodes exactly representable residuals losslessly") {
    ProductQuantizer pq;
    pq.m = 2;
    pq.ksub = 2;
    pq.dsub = 1;
    pq.codebooks = {1.0f, 2.0f, 3.0f, 99.0f};
    std::vector<double> residual = {2.0, 3.0};
    auto code = pq.encode(residual);
    CHECK(code == std::vector<uint8_t>{1, 0});
    CHECK(pq.decode(code) == residual);
}

TEST_CASE("degenerate single-codeword quantizer") {
    ProductQuantizer pq;
    pq.m = 2;
    pq.ksub = 1;
    pq.dsub = 1;
    pq.codebooks = {4.0f, -1.0f};
    auto code = pq.encode(std::vector<double>{100.0, 100.0});
    CHECK(code == std::vector<uint8_t>{0, 0});
    CHECK(pq.decode(code) == std::vector<double>{4.0, -1.0});
    CHECK_THROWS_AS(pq.decode(std::vector<uint8_t>{0, 1}), Error); // entry >= ksub
}

TEST_CASE("pq encode picks the closest representable vector") {
    // brute force over all ksub^m codes on a tiny instance
    Rng rng(19);
    ProductQuantizer pq;
    pq.m = 2;
    pq.ksub = 3;
    pq.dsub = 2;
    pq.codebooks.resize(pq.m * pq.ksub * pq.dsub);
    for (auto& x : pq.codebooks) x = static_cast<float>(rng.next_gaussian());

    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> r = {rng.next_gaussian(), rng.next_gaussian(), rng.next_gaussian(),
                                 rng.next_gaussian()};
        auto code = pq.encode(r);
        auto err = [&](const std::vector<uint8_t>& c) {
            auto dec = pq.decode(c);
            double e = 0.0;
            for (size_t i = 0; i < r.size(); ++i) e += (r[i] - dec[i]) * (r[i] - dec[i]);
            return e;
        };
        double chosen = err(code);
        for (uint8_t c0 = 0; c0 < 3; ++c0) {
            for (uint8_t c1 = 0; c1 < 3; ++c1) {
                CHECK(chosen <= err({c0, c1}) + 1e-12);
            }
        }
    }
}

TEST_CASE("orthogonal points with nlist = 4 give one posting per list") {
    FeatureSet set(4);
    for (uint32_t i = 0; i < 4; ++i) {
        std::vector<float> f(4, 0.0f);
        f[i] = 1.0f;
        set.add(i, 0, Box{0, 0, 10, 10}, f);
    }
    BuildOptions options;
    options.nlist = 4;
    options.m = 2;
    options.ksub = 1;
    options.kmeans_iterations = 10;
    options.seed = 5;
    IvfadcIndex index = build_index(set, options);
    for (const auto& list : index.lists) CHECK(list.size() == 1);
}

TEST_CASE("every feature lands in exactly one list") {
    FeatureSet set = random_features(500, 8, 21);
    BuildOptions options;
    options.nlist = 7;
    options.m = 4;
    options.ksub = 16;
    options.seed = 9;
    IvfadcIndex index = build_index(set, options);
    CHECK(index.total() == 500);
    std::set<std::pair<uint64_t, uint32_t>> seen;
    for (const auto& list : index.lists) {
        for (size_t p = 0; p < list.size(); ++p) {
            CHECK(seen.insert({list.image_ids[p], list.region_ids[p]}).second);
        }
    }
    CHECK(seen.size() == 500);
}

TEST_CASE("a lattice dataset quantizes losslessly and searches exactly") {
    // balanced {0, 4}^d lattice: the coarse centroid is exactly 2 per
    // coordinate and residuals are exactly +/-2, so every stage is exact
    const size_t dim = 4;
    FeatureSet set(dim);
    std::vector<float> f(dim);
    for (uint32_t i = 0; i < 16; ++i) {
        for (size_t j = 0; j < dim; ++j) f[j] = (i >> j) & 1 ? 4.0f : 0.0f;
        set.add(i, 0, Box{0, 0, 10, 10}, f);
    }
    BuildOptions options;
    options.nlist = 1;
    options.m = dim; // one-dimensional subspaces
    options.ksub = 2;
    options.kmeans_iterations = 8;
    options.seed = 13;
    IvfadcIndex index = build_index(set, options);

    for (size_t p = 0; p < index.lists[0].size(); ++p) {
        std::vector<double> rec = index.reconstruct(0, p);
        uint64_t image_id = index.lists[0].image_ids[p];
        auto original = set.feature(image_id); // image_id == row here
        for (size_t j = 0; j < dim; ++j) {
            CHECK(rec[j] == static_cast<double>(original[j]));
        }
    }

    auto w = random_query(dim, 3);
    auto approx = search(index, w, 16, 1);
    auto exact = search_exact(set, w, 16);
    REQUIRE(approx.size() == exact.size());
    for (size_t i = 0; i < approx.size(); ++i) {
        CHECK(approx[i].image_id == exact[i].image_id);
        CHECK(approx[i].region_id == exact[i].region_id);
        CHECK(approx[i].score == doctest::Approx(exact[i].score).epsilon(1e-12));
    }
}

TEST_CASE("hand-computed ADC score") {
    IvfadcIndex index;
    index.coarse.nlist = 1;
    index.coarse.dim = 2;
    index.coarse.centroids = {0.0f, 0.0f};
    index.pq.m = 2;
    index.pq.ksub = 2;
    index.pq.dsub = 1;
    index.pq.codebooks = {1.0f, 2.0f, 3.0f, 99.0f};
    InvertedList list;
    list.image_ids = {7};
    list.region_ids = {1};
    list.boxes = {Box{0, 0, 5, 5}};
    list.codes = {1, 0};
    index.lists = {list};

    auto hits = search(index, std::vector<double>{0.5, 2.0}, 1, 1);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].score == doctest::Approx(7.0).epsilon(1e-12)); // 0.5*2 + 2*3
    CHECK(hits[0].image_id == 7);
}

TEST_CASE("zero classifier ties break by (image_id, region_id)") {
    FeatureSet set = random_features(50, 8, 23);
    BuildOptions options;
    options.nlist = 4;
    options.m = 4;
    options.ksub = 8;
    options.seed = 2;
    IvfadcIndex index = build_index(set, options);
    std::vector<double> zero(8, 0.0);
    auto hits = search(index, zero, 50, 4);
    REQUIRE(hits.size() == 50);
    for (const auto& h : hits) CHECK(h.score == 0.0);
    for (size_t i = 1; i < hits.size(); ++i) {
        bool ordered = hits[i - 1].image_id < hits[i].image_id ||
                       (hits[i - 1].image_id == hits[i].image_id &&
                        hits[i - 1].region_id < hits[i].region_id);
        CHECK(ordered);
    }
}

TEST_CASE("ADC equals the reconstructed inner product exactly") {
    FeatureSet set = random_features(400, 16, 31);
    BuildOptions options;
    options.nlist = 8;
    options.m = 4;
    options.ksub = 16;
    options.seed = 17;
    IvfadcIndex index = build_index(set, options);
    auto w = random_query(16, 5);

    auto hits = search(index, w, 400, 8);
    for (const auto& h : hits) {
        std::vector<double> rec = index.reconstruct(h.list, h.offset);
        double direct = 0.0;
        for (size_t j = 0; j < rec.size(); ++j) direct += w[j] * rec[j];
        CHECK(h.score == doctest::Approx(direct).epsilon(1e-12));
    }
}

TEST_CASE("full-probe search matches the reconstruction oracle") {
    FeatureSet set = random_features(600, 16, 37);
    BuildOptions options;
    options.nlist = 8;
    options.m = 8;
    options.ksub = 16;
    options.seed = 19;
    IvfadcIndex index = build_index(set, options);

    for (uint64_t qseed = 0; qseed < 5; ++qseed) {
        auto w = random_query(16, 100 + qseed);
        auto mine = search(index, w, 100, 8);
        auto oracle = reconstruction_oracle(index, w, 100);
        REQUIRE(mine.size() == oracle.size());
        for (size_t i = 0; i < mine.size(); ++i) {
            CHECK(mine[i].image_id == oracle[i].image_id);
            CHECK(mine[i].region_id == oracle[i].region_id);
        }
    }
}

TEST_CASE("recall against the exact scan never drops as nprobe grows") {
    FeatureSet set = random_features(2000, 16, 41);
    BuildOptions options;
    options.nlist = 16;
    options.m = 8;
    options.ksub = 16;
    options.seed = 23;
    IvfadcIndex index = build_index(set, options);

    const size_t k = 10;
    const size_t n_queries = 20;
    double previous = -1.0;
    for (size_t nprobe = 1; nprobe <= 16; nprobe *= 2) {
        double recall_sum = 0.0;
        for (uint64_t q = 0; q < n_queries; ++q) {
            auto w = random_query(16, 500 + q);
            auto approx = search(index, w, k, nprobe);
            auto exact = search_exact(set, w, k);
            std::set<std::pair<uint64_t, uint32_t>> truth;
            for (const auto& h : exact) truth.insert({h.image_id, h.region_id});
            size_t found = 0;
            for (const auto& h : approx) {
                if (truth.count({h.image_id, h.region_id})) ++found;
            }
            recall_sum += static_cast<double>(found) / static_cast<double>(k);
        }
        double recall = recall_sum / static_cast<double>(n_queries);
        CHECK(recall >= previous);
        previous = recall;
    }
    CHECK(previous > 0.5); // full probe should recover most of the exact top-k
}

TEST_CASE("search_exact agrees with an independent sort") {
    FeatureSet set = random_features(1000, 8, 47);
    auto w = random_query(8, 9);
    auto hits = search_exact(set, w, 1000);

    std::vector<std::pair<double, size_t>> oracle;
    for (size_t i = 0; i < set.size(); ++i) {
        double s = 0.0;
        auto f = set.feature(i);
        for (size_t j = 0; j < 8; ++j) s += w[j] * static_cast<double>(f[j]);
        oracle.push_back({s, i});
    }
    std::stable_sort(oracle.begin(), oracle.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    REQUIRE(hits.size() == oracle.size());
    for (size_t i = 0; i < hits.size(); ++i) {
        CHECK(hits[i].score == doctest::Approx(oracle[i].first).epsilon(1e-12));
    }

    SUBCASE("single feature is rank 1; basis query orders axes") {
        FeatureSet one(2);
        one.add(3, 1, Box{0, 0, 4, 4}, std::vector<float>{2.0f, 0.0f});
        auto single = search_exact(one, std::vector<double>{1.0, 0.0}, 5);
        REQUIRE(single.size() == 1);
        CHECK(single[0].image_id == 3);

        FeatureSet two(2);
        two.add(1, 0, Box{0, 0, 4, 4}, std::vector<float>{1.0f, 0.0f});
        two.add(2, 0, Box{0, 0, 4, 4}, std::vector<float>{0.0f, 1.0f});
        auto ranked = search_exact(two, std::vector<double>{1.0, 0.0}, 2);
        CHECK(ranked[0].image_id == 1);
        CHECK(ranked[1].image_id == 2);
    }
}

TEST_CASE("index files round-trip byte-exactly") {
    testsup::TempDir tmp;
    FeatureSet set = random_features(300, 8, 53);
    BuildOptions options;
    options.nlist = 4;
    options.m = 4;
    options.ksub = 8;
    options.seed = 29;
    IvfadcIndex index = build_index(set, options);

    auto p1 = tmp.file("a.qarx");
    auto p2 = tmp.file("b.qarx");
    save_index(p1, index);
    IvfadcIndex loaded = load_index(p1);
    save_index(p2, loaded);
    CHECK(testsup::read_file(p1) == testsup::read_file(p2));

    auto w = random_query(8, 1);
    auto h1 = search(index, w, 10, 4);
    auto h2 = search(loaded, w, 10, 4);
    REQUIRE(h1.size() == h2.size());
    for (size_t i = 0; i < h1.size(); ++i) {
        CHECK(h1[i].image_id == h2[i].image_id);
        CHECK(h1[i].score == h2[i].score);
    }
}

TEST_CASE("search argument validation") {
    FeatureSet set = random_features(64, 8, 59);
    BuildOptions options;
    options.nlist = 4;
    options.m = 4;
    options.ksub = 8;
    IvfadcIndex index = build_index(set, options);
    std::vector<double> w(8, 1.0);
    CHECK_THROWS_AS(search(index, w, 10, 0), Error);
    CHECK_THROWS_AS(search(index, w, 10, 5), Error);
    CHECK_THROWS_AS(search(index, std::vector<double>(3, 1.0), 10, 1), Error);

    IvfadcIndex empty;
    empty.coarse.nlist = 1;
    empty.coarse.dim = 8;
    empty.coarse.centroids.assign(8, 0.0f);
    empty.pq.m = 4;
    empty.pq.ksub = 8;
    empty.pq.dsub = 2;
    empty.pq.codebooks.assign(4 * 8 * 2, 0.0f);
    empty.lists.resize(1);
    CHECK_THROWS_AS(search(empty, w, 10, 1), Error);
}

TEST_CASE("build_index rejects insufficient points") {
    FeatureSet set = random_features(10, 8, 61);
    BuildOptions options;
    options.nlist = 16;
    options.m = 4;
    options.ksub = 8;
    CHECK_THROWS_AS(build_index(set, options), Error);
}

TEST_SUITE_END();
