#pragma once

#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace qar {

// Token vectors in the word2vec text format. Immutable after load.
class WordVectorTable {
public:
    WordVectorTable(size_t dim, std::unordered_map<std::string, std::vector<double>> entries)
        : dim_(dim), entries_(std::move(entries)) {}

    size_t dim() const { return dim_; }
    size_t size() const { return entries_.size(); }

    bool contains(const std::string& token) const { return entries_.count(token) != 0; }

    // nullptr when the token is out of vocabulary
    const std::vector<double>* find(const std::string& token) const {
        auto it = entries_.find(token);
        return it == entries_.end() ? nullptr : &it->second;
    }

private:
    size_t dim_;
    std::unordered_map<std::string, std::vector<double>> entries_;
};

struct Phrase {
    std::string raw;
    std::vector<std::string> tokens;

    bool operator==(const Phrase& o) const { return tokens == o.tokens; }
};

struct PhraseEmbedding {
    std::vector<double> v;
};

// Lowercases, splits on whitespace, strips ASCII punctuation off token edges.
// Tokens that are pure punctuation disappear.
std::vector<std::string> tokenize(const std::string& text);

Phrase make_phrase(const std::string& text);

// First line "<count> <dim>", then "<token> <c1> ... <c_dim>" per line.
WordVectorTable load_word_vectors(const std::string& path);

// Mean of the in-vocabulary token vectors; OOV tokens are skipped.
// Fails when every token is out of vocabulary.
PhraseEmbedding embed_phrase(const WordVectorTable& table, const Phrase& phrase);

// Rightmost token found in `noun_lexicon`, falling back to the last token.
// Returns the token and its position.
struct HeadNoun {
    std::string token;
    size_t index = 0;
};
HeadNoun extract_head_noun(const Phrase& phrase, const std::set<std::string>& noun_lexicon);

struct Substitution {
    Phrase phrase;
    std::string replaced; // the extracted head noun
    size_t index = 0;
};

// Swaps the head noun for `replacement`, leaving every other token in place.
Substitution substitute_head_noun(const Phrase& phrase, const std::set<std::string>& noun_lexicon,
                                  const std::string& replacement);

} // namespace qar
