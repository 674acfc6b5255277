#include <doctest.h>

#include "qar/embedding.hpp"
#include "qar/error.hpp"
#include "qar/rng.hpp"
#include "support.hpp"

using namespace qar;

TEST_SUITE_BEGIN("embedding");

TEST_CASE("tokenizer lowercases, splits, strips edge punctuation") {
    CHECK(tokenize("A Running MAN") == std::vector<std::string>{"a", "running", "man"});
    CHECK(tokenize("  \"hello,\"  world!  ") == std::vector<std::string>{"hello", "world"});
    CHECK(tokenize("rock-n-roll") == std::vector<std::string>{"rock-n-roll"}); // interior kept
    CHECK(tokenize("...") == std::vector<std::string>{});
    CHECK(tokenize("c0_1") == std::vector<std::string>{"c0_1"});
}

TEST_CASE("load_word_vectors parses the text format") {
    testsup::TempDir tmp;
    auto path = tmp.file("wv.txt");
    testsup::write_file(path, "2 2\na 1 0\nb 0 1\n");
    auto table = load_word_vectors(path);
    CHECK(table.dim() == 2);
    CHECK(table.size() == 2);
    REQUIRE(table.find("a") != nullptr);
    CHECK((*table.find("a"))[0] == 1.0);
    CHECK((*table.find("a"))[1] == 0.0);
}

TEST_CASE("load_word_vectors rejects a dimension mismatch") {
    testsup::TempDir tmp;
    auto path = tmp.file("wv.txt");
    testsup::write_file(path, "1 3\na 1 2\n");
    CHECK_THROWS_WITH_AS(load_word_vectors(path), doctest::Contains("dimension mismatch"), Error);
}

TEST_CASE("load_word_vectors rejects duplicate tokens") {
    testsup::TempDir tmp;
    auto path = tmp.file("wv.txt");
    testsup::write_file(path, "2 2\na 1 0\na 0 1\n");
    CHECK_THROWS_WITH_AS(load_word_vectors(path), doctest::Contains("duplicate token"), Error);
}

TEST_CASE("load_word_vectors rejects malformed headers and bad counts") {
    testsup::TempDir tmp;
    auto path = tmp.file("wv.txt");
    testsup::write_file(path, "two 2\na 1 0\n");
    CHECK_THROWS_AS(load_word_vectors(path), Error);
    testsup::write_file(path, "3 2\na 1 0\nb 0 1\n");
    CHECK_THROWS_AS(load_word_vectors(path), Error);
}

TEST_CASE("embed_phrase averages in-vocabulary tokens") {
    auto table = testsup::make_table(2, {{"a", {1, 0}}, {"b", {0, 1}}});

    auto single = embed_phrase(table, make_phrase("a"));
    CHECK(single.v == std::vector<double>{1, 0});

    auto mean = embed_phrase(table, make_phrase("a b"));
    CHECK(mean.v[0] == doctest::Approx(0.5));
    CHECK(mean.v[1] == doctest::Approx(0.5));

    auto skipped = embed_phrase(table, make_phrase("a zzz"));
    CHECK(skipped.v == std::vector<double>{1, 0});

    CHECK_THROWS_AS(embed_phrase(table, make_phrase("zzz yyy")), Error);
}

TEST_CASE("embed_phrase is order-free and exact on single tokens") {
    Rng rng(7);
    std::vector<std::pair<std::string, std::vector<double>>> entries;
    std::vector<std::string> tokens = {"cat", "dog", "bird", "fish", "fox"};
    for (const auto& t : tokens) {
        entries.push_back({t, {rng.next_gaussian(), rng.next_gaussian(), rng.next_gaussian()}});
    }
    auto table = testsup::make_table(3, entries);

    for (int trial = 0; trial < 20; ++trial) {
        auto shuffled = tokens;
        rng.shuffle(shuffled);
        Phrase p1, p2;
        p1.tokens = tokens;
        p2.tokens = shuffled;
        auto v1 = embed_phrase(table, p1);
        auto v2 = embed_phrase(table, p2);
        for (size_t i = 0; i < 3; ++i) CHECK(v1.v[i] == doctest::Approx(v2.v[i]).epsilon(1e-12));
    }
    for (const auto& [token, vec] : entries) {
        Phrase p;
        p.tokens = {token};
        CHECK(embed_phrase(table, p).v == vec);
    }
}

TEST_CASE("substitute_head_noun picks the rightmost lexicon noun") {
    auto sub = substitute_head_noun(make_phrase("a running man"), {"man", "woman"}, "woman");
    CHECK(sub.phrase.raw == "a running woman");
    CHECK(sub.replaced == "man");
    CHECK(sub.index == 2);

    auto single = substitute_head_noun(make_phrase("dog"), {"dog"}, "cat");
    CHECK(single.phrase.raw == "cat");
    CHECK(single.replaced == "dog");

    auto fallback = substitute_head_noun(make_phrase("bright red kayak"), {}, "canoe");
    CHECK(fallback.phrase.raw == "bright red canoe");
    CHECK(fallback.replaced == "kayak");
}

TEST_CASE("substitute_head_noun changes exactly one position") {
    Rng rng(11);
    std::vector<std::string> vocab = {"small", "big", "dog", "cat", "red", "horse", "cow"};
    std::set<std::string> lexicon = {"dog", "cat", "horse", "cow"};
    for (int trial = 0; trial < 50; ++trial) {
        Phrase phrase;
        size_t len = 1 + rng.next_below(5);
        for (size_t i = 0; i < len; ++i) phrase.tokens.push_back(vocab[rng.next_below(vocab.size())]);
        auto sub = substitute_head_noun(phrase, lexicon, "zebra");
        REQUIRE(sub.phrase.tokens.size() == phrase.tokens.size());
        for (size_t i = 0; i < len; ++i) {
            if (i == sub.index) {
                CHECK(sub.phrase.tokens[i] == "zebra");
            } else {
                CHECK(sub.phrase.tokens[i] == phrase.tokens[i]);
            }
        }
    }
}

TEST_SUITE_END();
