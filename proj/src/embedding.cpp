#include "qar/embedding.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "qar/error.hpp"

namespace qar {

namespace {

bool is_ascii_punct(char c) {
    unsigned char u = static_cast<unsigned char>(c);
    return u < 128 && std::ispunct(u);
}

std::string normalize_token(const std::string& word) {
    size_t begin = 0;
    size_t end = word.size();
    while (begin < end && is_ascii_punct(word[begin])) ++begin;
    while (end > begin && is_ascii_punct(word[end - 1])) --end;
    std::string out;
    out.reserve(end - begin);
    for (size_t i = begin; i < end; ++i) {
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(word[i]))));
    }
    return out;
}

} // namespace

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::istringstream in(text);
    std::string word;
    while (in >> word) {
        std::string token = normalize_token(word);
        if (!token.empty()) tokens.push_back(std::move(token));
    }
    return tokens;
}

Phrase make_phrase(const std::string& text) {
    return Phrase{text, tokenize(text)};
}

WordVectorTable load_word_vectors(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open word vector file: " + path);

    std::string header;
    if (!std::getline(in, header)) fail(ErrorCode::Format, path + ": empty file");
    std::istringstream hs(header);
    long long count = -1, dim = -1;
    if (!(hs >> count >> dim) || count < 0 || dim <= 0) {
        fail(ErrorCode::Format, path + ": malformed header, expected \"<count> <dim>\"");
    }
    std::string trailing;
    if (hs >> trailing) fail(ErrorCode::Format, path + ": malformed header, trailing fields");

    std::unordered_map<std::string, std::vector<double>> entries;
    entries.reserve(static_cast<size_t>(count));
    std::string line;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string token;
        ls >> token;
        if (token.empty()) continue;
        std::vector<double> vec;
        vec.reserve(static_cast<size_t>(dim));
        double value;
        while (ls >> value) vec.push_back(value);
        if (vec.size() != static_cast<size_t>(dim)) {
            fail(ErrorCode::Format, path + ":" + std::to_string(lineno) +
                                        ": dimension mismatch for token '" + token + "' (got " +
                                        std::to_string(vec.size()) + ", want " +
                                        std::to_string(dim) + ")");
        }
        if (!entries.emplace(token, std::move(vec)).second) {
            fail(ErrorCode::Format,
                 path + ":" + std::to_string(lineno) + ": duplicate token '" + token + "'");
        }
    }
    if (entries.size() != static_cast<size_t>(count)) {
        fail(ErrorCode::Format, path + ": header declares " + std::to_string(count) +
                                    " entries, file has " + std::to_string(entries.size()));
    }
    return WordVectorTable(static_cast<size_t>(dim), std::move(entries));
}

PhraseEmbedding embed_phrase(const WordVectorTable& table, const Phrase& phrase) {
    if (phrase.tokens.empty()) fail(ErrorCode::InvalidArgument, "empty phrase");
    std::vector<double> sum(table.dim(), 0.0);
    size_t hits = 0;
    for (const auto& token : phrase.tokens) {
        if (const auto* vec = table.find(token)) {
            for (size_t i = 0; i < sum.size(); ++i) sum[i] += (*vec)[i];
            ++hits;
        }
    }
    if (hits == 0) {
        fail(ErrorCode::OutOfVocabulary, "no token of phrase '" + phrase.raw + "' is in vocabulary");
    }
    for (double& x : sum) x /= static_cast<double>(hits);
    return PhraseEmbedding{std::move(sum)};
}

HeadNoun extract_head_noun(const Phrase& phrase, const std::set<std::string>& noun_lexicon) {
    if (phrase.tokens.empty()) fail(ErrorCode::InvalidArgument, "empty phrase");
    for (size_t i = phrase.tokens.size(); i > 0; --i) {
        if (noun_lexicon.count(phrase.tokens[i - 1])) {
            return HeadNoun{phrase.tokens[i - 1], i - 1};
        }
    }
    return HeadNoun{phrase.tokens.back(), phrase.tokens.size() - 1};
}

Substitution substitute_head_noun(const Phrase& phrase, const std::set<std::string>& noun_lexicon,
                                  const std::string& replacement) {
    HeadNoun head = extract_head_noun(phrase, noun_lexicon);
    Substitution out;
    out.replaced = head.token;
    out.index = head.index;
    out.phrase.tokens = phrase.tokens;
    out.phrase.tokens[head.index] = replacement;
    std::string raw;
    for (size_t i = 0; i < out.phrase.tokens.size(); ++i) {
        if (i) raw.push_back(' ');
        raw += out.phrase.tokens[i];
    }
    out.phrase.raw = std::move(raw);
    return out;
}

} // namespace qar
