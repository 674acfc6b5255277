#include <algorithm>
#include <cmath>

#include <doctest.h>

#include "qar/error.hpp"
#include "qar/npa.hpp"
#include "qar/rng.hpp"
#include "support.hpp"

using namespace qar;

TEST_SUITE_BEGIN("npa");

namespace {

// identity classifier map so a unit-vector token embeds straight into feature
// space: score(object) = feature[axis of the category token]
GeneratorParams identity_params(size_t dim) {
    GeneratorParams p = GeneratorParams::zeros(dim, dim, 2);
    for (size_t i = 0; i < dim; ++i) p.W[i * dim + i] = 1.0;
    return p;
}

LabeledObject object(uint64_t id, const std::string& category, std::vector<float> feature) {
    return LabeledObject{id, category, std::move(feature)};
}

} // namespace

TEST_CASE("mutual exclusivity: hierarchy and co-occurrence filters") {
    Taxonomy tax;
    tax.add_edge("dog", "animal");
    tax.add_edge("cat", "animal");
    tax.add_edge("animal", "entity");

    CooccurrenceStats cooc;
    cooc.set_total("skier", 1000);
    cooc.set_total("man", 5000);
    cooc.set_pair("skier", "man", 20);

    // the 2% example: 20 of 1000 skier objects are also man objects
    CHECK_FALSE(is_mutually_exclusive("skier", "man", tax, cooc));
    CHECK_FALSE(is_mutually_exclusive("man", "skier", tax, cooc)); // symmetric

    CHECK_FALSE(is_mutually_exclusive("dog", "dog", tax, cooc));
    CHECK(is_mutually_exclusive("dog", "cat", tax, cooc)); // siblings, no co-occurrence

    // ancestry in either direction, including transitive
    CHECK_FALSE(is_mutually_exclusive("dog", "animal", tax, cooc));
    CHECK_FALSE(is_mutually_exclusive("entity", "dog", tax, cooc));

    // below the 1% ratio on both sides
    cooc.set_total("car", 10000);
    cooc.set_total("tree", 10000);
    cooc.set_pair("car", "tree", 5);
    CHECK(is_mutually_exclusive("car", "tree", tax, cooc));
}

TEST_CASE("the two filters are complementary and compose") {
    Taxonomy tax;
    tax.add_edge("skier", "person");
    CooccurrenceStats cooc;
    cooc.set_total("skier", 1000);
    cooc.set_total("man", 1000);
    cooc.set_pair("skier", "man", 20);

    std::vector<std::pair<std::string, std::string>> pairs = {
        {"skier", "person"}, // hierarchy only
        {"skier", "man"},    // co-occurrence only
        {"skier", "zebra"},  // neither
    };

    Taxonomy no_tax;
    CooccurrenceStats no_cooc;
    auto removed = [&](const Taxonomy& t, const CooccurrenceStats& c) {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& pr : pairs) {
            if (!is_mutually_exclusive(pr.first, pr.second, t, c)) out.push_back(pr);
        }
        return out;
    };

    auto by_tax = removed(tax, no_cooc);
    auto by_cooc = removed(no_tax, cooc);
    auto by_both = removed(tax, cooc);

    CHECK(by_tax == std::vector<std::pair<std::string, std::string>>{{"skier", "person"}});
    CHECK(by_cooc == std::vector<std::pair<std::string, std::string>>{{"skier", "man"}});
    // both together remove a superset of what either removes alone
    for (const auto& pr : by_tax) CHECK(std::count(by_both.begin(), by_both.end(), pr) == 1);
    for (const auto& pr : by_cooc) CHECK(std::count(by_both.begin(), by_both.end(), pr) == 1);
    CHECK(by_both.size() == 2);
}

TEST_CASE("taxonomy cycles are rejected") {
    testsup::TempDir tmp;
    auto path = tmp.file("tax.tsv");
    testsup::write_file(path, "a\tb\nb\tc\nc\ta\n");
    CHECK_THROWS_WITH_AS(Taxonomy::load_tsv(path), doctest::Contains("cycle"), Error);
}

TEST_CASE("co-occurrence pair counts may not exceed either total") {
    testsup::TempDir tmp;
    auto totals = tmp.file("totals.tsv");
    auto pairs = tmp.file("pairs.tsv");
    testsup::write_file(totals, "a\t10\nb\t5\n");
    testsup::write_file(pairs, "a\tb\t7\n");
    CHECK_THROWS_AS(CooccurrenceStats::load_tsv(totals, pairs), Error);
}

TEST_CASE("mine_candidates ranks by generated-classifier score") {
    auto table = testsup::make_table(3, {{"dog", {1, 0, 0}}});
    GeneratorParams params = identity_params(3);

    SUBCASE("uniform labels keep their ranks") {
        std::vector<LabeledObject> valset = {
            object(0, "dog", {3, 0, 0}),
            object(1, "dog", {2, 0, 0}),
            object(2, "dog", {1, 0, 0}),
        };
        auto ranked = mine_candidates(params, table, valset, "dog", 500);
        REQUIRE(ranked.size() == 3);
        for (size_t i = 0; i < 3; ++i) {
            CHECK(ranked[i].category == "dog");
            CHECK(ranked[i].rank == i + 1);
        }
    }

    SUBCASE("k = 0 returns nothing") {
        std::vector<LabeledObject> valset = {object(0, "dog", {1, 0, 0})};
        CHECK(mine_candidates(params, table, valset, "dog", 0).empty());
    }

    SUBCASE("matches a brute-force score-and-sort oracle") {
        Rng rng(77);
        std::vector<LabeledObject> valset;
        for (uint64_t i = 0; i < 40; ++i) {
            valset.push_back(object(i, "l" + std::to_string(i % 5),
                                    {static_cast<float>(rng.next_gaussian()),
                                     static_cast<float>(rng.next_gaussian()),
                                     static_cast<float>(rng.next_gaussian())}));
        }
        auto ranked = mine_candidates(params, table, valset, "dog", 10);

        // oracle: score = feature[0] because the query embeds to e0
        std::vector<std::pair<double, uint64_t>> oracle;
        for (const auto& o : valset) oracle.push_back({-static_cast<double>(o.feature[0]), o.object_id});
        std::sort(oracle.begin(), oracle.end());
        REQUIRE(ranked.size() == 10);
        for (size_t i = 0; i < 10; ++i) {
            CHECK(ranked[i].category == valset[oracle[i].second].category);
        }
    }

    SUBCASE("an OOV category is an error") {
        std::vector<LabeledObject> valset = {object(0, "dog", {1, 0, 0})};
        CHECK_THROWS_AS(mine_candidates(params, table, valset, "unknown", 5), Error);
    }
}

TEST_CASE("confusion weights follow the depth-minus-rank rule") {
    // query scores put label A at ranks 1 and 3 and label B at rank 2:
    // raw weights (500-1)+(500-3) = 996 and (500-2) = 498
    auto table = testsup::make_table(3, {{"dog", {1, 0, 0}}, {"a", {0, 1, 0}}, {"b", {0, 0, 1}}});
    GeneratorParams params = identity_params(3);
    std::vector<LabeledObject> valset = {
        object(0, "a", {3, 0, 0}),
        object(1, "b", {2, 0, 0}),
        object(2, "a", {1, 0, 0}),
    };
    Taxonomy tax;
    CooccurrenceStats cooc;
    ConfusionTable confusion =
        build_confusion_table(params, table, valset, tax, cooc, {"dog"}, 500);

    const auto* entry = confusion.find("dog");
    REQUIRE(entry != nullptr);
    REQUIRE(entry->size() == 2);
    CHECK((*entry)[0].category == "a");
    CHECK((*entry)[0].weight == doctest::Approx(996.0 / 1494.0).epsilon(1e-9));
    CHECK((*entry)[1].category == "b");
    CHECK((*entry)[1].weight == doctest::Approx(498.0 / 1494.0).epsilon(1e-9));

    double sum = 0.0;
    for (const auto& e : *entry) sum += e.weight;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("categories whose candidates all fail the filters are omitted") {
    auto table = testsup::make_table(2, {{"dog", {1, 0}}, {"puppy", {0, 1}}});
    GeneratorParams params = identity_params(2);
    std::vector<LabeledObject> valset = {object(0, "puppy", {5, 0})};
    Taxonomy tax;
    tax.add_edge("puppy", "dog");
    CooccurrenceStats cooc;
    ConfusionTable confusion = build_confusion_table(params, table, valset, tax, cooc, {"dog"});
    CHECK(confusion.find("dog") == nullptr);
    CHECK(confusion.empty());
}

TEST_CASE("every confusion pair is mutually exclusive under the same filters") {
    Rng rng(5);
    auto table = testsup::make_table(
        4, {{"q0", {1, 0, 0, 0}}, {"q1", {0, 1, 0, 0}}, {"x", {0, 0, 1, 0}}, {"y", {0, 0, 0, 1}},
            {"z", {0.5, 0.5, 0, 0}}});
    GeneratorParams params = identity_params(4);
    std::vector<LabeledObject> valset;
    std::vector<std::string> labels = {"q0", "q1", "x", "y", "z"};
    for (uint64_t i = 0; i < 60; ++i) {
        valset.push_back(object(i, labels[i % labels.size()],
                                {static_cast<float>(rng.next_gaussian()),
                                 static_cast<float>(rng.next_gaussian()),
                                 static_cast<float>(rng.next_gaussian()),
                                 static_cast<float>(rng.next_gaussian())}));
    }
    Taxonomy tax;
    tax.add_edge("x", "q0");
    CooccurrenceStats cooc;
    cooc.set_total("q1", 100);
    cooc.set_total("y", 100);
    cooc.set_pair("q1", "y", 50);

    ConfusionTable confusion =
        build_confusion_table(params, table, valset, tax, cooc, {"q0", "q1"});
    for (const auto& [category, entries] : confusion.entries()) {
        for (const auto& e : entries) {
            CHECK(is_mutually_exclusive(category, e.category, tax, cooc));
        }
    }
}

TEST_CASE("confusion table JSON round-trip") {
    testsup::TempDir tmp;
    ConfusionTable confusion;
    confusion.insert("dog", {{"cat", 0.5}, {"horse", 0.3}, {"cow", 0.2}});
    auto path = tmp.file("confusion.json");
    confusion.save_json(path);
    ConfusionTable loaded = ConfusionTable::load_json(path);
    const auto* entry = loaded.find("dog");
    REQUIRE(entry != nullptr);
    REQUIRE(entry->size() == 3);
    CHECK((*entry)[0].category == "cat");
    CHECK((*entry)[0].weight == doctest::Approx(0.5));
}

TEST_CASE("sampling frequencies converge to the entry weights") {
    ConfusionTable confusion;
    confusion.insert("dog", {{"cat", 0.5}, {"horse", 0.3}, {"cow", 0.2}});
    Rng rng(12345);
    std::map<std::string, int> counts;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) ++counts[confusion.sample("dog", rng)];
    CHECK(std::abs(counts["cat"] / double(draws) - 0.5) < 0.02);
    CHECK(std::abs(counts["horse"] / double(draws) - 0.3) < 0.02);
    CHECK(std::abs(counts["cow"] / double(draws) - 0.2) < 0.02);
}

namespace {

struct AugmentFixture {
    WordVectorTable table = testsup::make_table(2, {{"a", {0.1, 0.1}},
                                                    {"man", {1, 0}},
                                                    {"woman", {0, 1}}});
    std::set<std::string> lexicon = {"man", "woman"};
    std::vector<RegionFeature> regions;
    std::vector<PhraseRow> rows;
    LabelMatrix labels;

    AugmentFixture() {
        Box b0{0, 0, 10, 10}, b1{20, 0, 30, 10}, b2{40, 0, 50, 10};
        regions = {RegionFeature{1, 0, b0, {1.0f, 0.0f}}, RegionFeature{1, 1, b1, {0.0f, 1.0f}},
                   RegionFeature{1, 2, b2, {1.0f, 1.0f}}};
        Phrase phrase = make_phrase("a running man");
        rows.push_back(PhraseRow{phrase, embed_phrase(table, phrase), b1, false});
        labels = LabelMatrix(1, 3);
        labels.set(0, 1, Label::Pos); // positive at region 1 of 3
    }
};

} // namespace

TEST_CASE("augment_minibatch masks negatives onto the source positives") {
    AugmentFixture fx;
    ConfusionTable confusion;
    confusion.insert("man", {{"woman", 1.0}});
    Rng rng(3);
    size_t added = augment_minibatch(fx.rows, fx.labels, confusion, fx.table, fx.lexicon, 1, rng);
    CHECK(added == 1);
    REQUIRE(fx.rows.size() == 2);
    CHECK(fx.rows[1].phrase.raw == "a running woman");
    CHECK(fx.rows[1].augmented);
    REQUIRE(fx.labels.rows() == 2);
    CHECK(fx.labels.at(1, 0) == Label::Ignore);
    CHECK(fx.labels.at(1, 1) == Label::Neg);
    CHECK(fx.labels.at(1, 2) == Label::Ignore);
}

TEST_CASE("rows without positives or without table entries add nothing") {
    AugmentFixture fx;
    SUBCASE("all-negative source row") {
        fx.labels.set(0, 1, Label::Neg);
        ConfusionTable confusion;
        confusion.insert("man", {{"woman", 1.0}});
        Rng rng(3);
        CHECK(augment_minibatch(fx.rows, fx.labels, confusion, fx.table, fx.lexicon, 1, rng) == 0);
        CHECK(fx.rows.size() == 1);
    }
    SUBCASE("no entry for the head noun") {
        ConfusionTable confusion;
        confusion.insert("woman", {{"man", 1.0}});
        Rng rng(3);
        CHECK(augment_minibatch(fx.rows, fx.labels, confusion, fx.table, fx.lexicon, 1, rng) == 0);
    }
}

TEST_CASE("augmented rows never contain POS and mirror the source positives") {
    Rng rng(999);
    auto table = testsup::make_table(2, {{"cat", {1, 0}}, {"dog", {0.7, 0.2}}, {"cow", {0, 1}}});
    std::set<std::string> lexicon = {"cat", "dog", "cow"};
    ConfusionTable confusion;
    confusion.insert("cat", {{"dog", 0.6}, {"cow", 0.4}});

    for (int trial = 0; trial < 30; ++trial) {
        size_t n_r = 1 + rng.next_below(5);
        std::vector<RegionFeature> regions;
        for (size_t r = 0; r < n_r; ++r) {
            regions.push_back(RegionFeature{1, static_cast<uint32_t>(r),
                                            Box{30.0 * r, 0, 30.0 * r + 10, 10},
                                            {static_cast<float>(rng.next_gaussian()),
                                             static_cast<float>(rng.next_gaussian())}});
        }
        std::vector<PhraseRow> rows;
        Phrase phrase = make_phrase("cat");
        rows.push_back(PhraseRow{phrase, embed_phrase(table, phrase), regions[0].box, false});
        LabelMatrix labels(1, n_r);
        size_t n_pos = 0;
        for (size_t r = 0; r < n_r; ++r) {
            if (rng.next_double() < 0.5) {
                labels.set(0, r, Label::Pos);
                ++n_pos;
            }
        }
        size_t n_neg_draws = 1 + rng.next_below(3);
        size_t added =
            augment_minibatch(rows, labels, confusion, table, lexicon, n_neg_draws, rng);
        if (n_pos == 0) {
            CHECK(added == 0);
            continue;
        }
        CHECK(added == n_neg_draws);
        for (size_t row = 1; row < labels.rows(); ++row) {
            size_t negs = 0;
            for (size_t r = 0; r < n_r; ++r) {
                CHECK(labels.at(row, r) != Label::Pos);
                if (labels.at(row, r) == Label::Neg) {
                    ++negs;
                    CHECK(labels.at(0, r) == Label::Pos);
                }
            }
            CHECK(negs == n_pos);
        }
    }
}

TEST_SUITE_END();
