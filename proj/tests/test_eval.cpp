#include <cmath>

#include <doctest.h>

#include "qar/error.hpp"
#include "qar/eval.hpp"
#include "qar/rng.hpp"
#include "support.hpp"

using namespace qar;

TEST_SUITE_BEGIN("eval");

namespace {

RankedRegion region(uint64_t image, uint32_t id, const Box& box) {
    return RankedRegion{image, id, box};
}

} // namespace

TEST_CASE("iou examples") {
    Box a{0, 0, 10, 10};
    CHECK(box_iou(a, a) == 1.0);
    CHECK(box_iou(a, Box{20, 20, 30, 30}) == 0.0);
    CHECK(box_iou(a, Box{5, 5, 15, 15}) == doctest::Approx(25.0 / 175.0).epsilon(1e-12));
}

TEST_CASE("iou is symmetric and bounded") {
    Rng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        Box a{rng.uniform(0, 50), rng.uniform(0, 50), 0, 0};
        a.x2 = a.x1 + rng.uniform(1, 40);
        a.y2 = a.y1 + rng.uniform(1, 40);
        Box b{rng.uniform(0, 50), rng.uniform(0, 50), 0, 0};
        b.x2 = b.x1 + rng.uniform(1, 40);
        b.y2 = b.y1 + rng.uniform(1, 40);
        double ab = box_iou(a, b);
        CHECK(ab == box_iou(b, a));
        CHECK(ab >= 0.0);
        CHECK(ab <= 1.0);
    }
}

TEST_CASE("average precision on the TP/FP/TP pattern") {
    // two gt boxes in separate images; the middle detection misses
    std::vector<GroundTruthInstance> gts = {{1, Box{0, 0, 10, 10}}, {2, Box{0, 0, 10, 10}}};
    std::vector<RankedRegion> ranked = {
        region(1, 0, Box{0, 0, 10, 10}),    // TP
        region(3, 0, Box{0, 0, 10, 10}),    // FP (wrong image)
        region(2, 0, Box{0, 0, 10, 10}),    // TP
    };
    CHECK(average_precision(ranked, gts, 0.5) ==
          doctest::Approx((1.0 / 1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-9));
}

TEST_CASE("average precision edge cases") {
    std::vector<GroundTruthInstance> gts = {{1, Box{0, 0, 10, 10}}, {2, Box{0, 0, 10, 10}}};
    SUBCASE("all positives ranked first") {
        std::vector<RankedRegion> ranked = {region(1, 0, Box{0, 0, 10, 10}),
                                            region(2, 0, Box{0, 0, 10, 10})};
        CHECK(average_precision(ranked, gts, 0.5) == 1.0);
    }
    SUBCASE("no true positives") {
        std::vector<RankedRegion> ranked = {region(5, 0, Box{0, 0, 10, 10})};
        CHECK(average_precision(ranked, gts, 0.5) == 0.0);
    }
    SUBCASE("zero positives is an error") {
        std::vector<RankedRegion> ranked = {region(1, 0, Box{0, 0, 10, 10})};
        CHECK_THROWS_AS(average_precision(ranked, {}, 0.5), Error);
    }
}

TEST_CASE("trailing false positives after all matches leave AP unchanged") {
    std::vector<GroundTruthInstance> gts = {{1, Box{0, 0, 10, 10}}, {2, Box{0, 0, 10, 10}}};
    std::vector<RankedRegion> ranked = {
        region(1, 0, Box{0, 0, 10, 10}),
        region(9, 0, Box{0, 0, 10, 10}),
        region(2, 0, Box{0, 0, 10, 10}),
    };
    double before = average_precision(ranked, gts, 0.5);
    for (uint32_t i = 0; i < 25; ++i) ranked.push_back(region(100 + i, i, Box{0, 0, 10, 10}));
    CHECK(average_precision(ranked, gts, 0.5) == before);
}

TEST_CASE("greedy matching uses each ground truth once") {
    std::vector<GroundTruthInstance> gts = {{1, Box{0, 0, 10, 10}}};
    std::vector<RankedRegion> ranked = {
        region(1, 0, Box{0, 0, 10, 10}),
        region(1, 1, Box{0.5, 0, 10.5, 10}), // overlaps the same (now matched) gt
    };
    auto tp = match_ranked(ranked, gts, 0.5);
    CHECK(tp == std::vector<bool>{true, false});
}

TEST_CASE("precision at k") {
    std::vector<GroundTruthInstance> gts;
    std::vector<RankedRegion> ranked;
    for (uint32_t i = 0; i < 10; ++i) {
        Box b{10.0 * i, 0, 10.0 * i + 8, 8};
        ranked.push_back(region(i, 0, b));
        if (i < 7) gts.push_back({i, b}); // 7 of the top 10 are true
    }
    CHECK(precision_at_k(ranked, gts, 10, 0.5) == doctest::Approx(0.7));
    CHECK(precision_at_k(ranked, gts, 7, 0.5) == doctest::Approx(1.0));
    SUBCASE("all false") {
        std::vector<GroundTruthInstance> far = {{99, Box{0, 0, 1, 1}}};
        CHECK(precision_at_k(ranked, far, 10, 0.5) == 0.0);
    }
    SUBCASE("k beyond the list just divides by k") {
        CHECK(precision_at_k(ranked, gts, 20, 0.5) == doctest::Approx(7.0 / 20.0));
    }
}

TEST_CASE("localization accuracy examples") {
    std::vector<Box> gts = {Box{0, 0, 10, 10}, Box{0, 0, 10, 10}, Box{0, 0, 10, 10}};
    SUBCASE("perfect predictions") {
        CHECK(localization_accuracy(gts, gts, 0.9) == 1.0);
    }
    SUBCASE("no overlap at all") {
        std::vector<Box> preds(3, Box{50, 50, 60, 60});
        CHECK(localization_accuracy(preds, gts, 0.5) == 0.0);
    }
    SUBCASE("IoUs 0.6, 0.55, 0.4 against threshold 0.5") {
        // aligned boxes with chosen widths: IoU of (0,0,w,10) vs (0,0,10,10)
        // is w/10 for w < 10
        std::vector<Box> preds = {Box{0, 0, 6, 10}, Box{0, 0, 5.5, 10}, Box{0, 0, 4, 10}};
        CHECK(localization_accuracy(preds, gts, 0.5) == doctest::Approx(2.0 / 3.0));
    }
    SUBCASE("empty input is an error") {
        CHECK_THROWS_AS(localization_accuracy({}, {}, 0.5), Error);
    }
}

TEST_CASE("mAP is the unweighted mean of per-query APs") {
    CHECK(mean_average_precision({1.0, 0.5, 0.0}) == doctest::Approx(0.5));
    CHECK_THROWS_AS(mean_average_precision({}), Error);
}

TEST_CASE("deduplication keeps the best-ranked copy of a box") {
    Box b{0, 0, 10, 10};
    std::vector<RankedRegion> ranked = {
        region(1, 0, b),
        region(1, 1, b),                  // same image + box: dropped
        region(1, 2, Box{1, 0, 11, 10}),  // different box: kept
        region(2, 0, b),                  // different image: kept
    };
    CHECK(dedup_ranked_indices(ranked) == std::vector<size_t>{0, 2, 3});
}

TEST_SUITE_END();
