#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace qar {

// Confusable-category world: categories inside a supercluster share nearby
// feature centers and nearby word vectors but are mutually exclusive, which
// is exactly the regime hard-negative phrase mining is meant to fix.
struct SyntheticWorldSpec {
    size_t superclusters = 5;
    size_t categories_per_supercluster = 3;
    size_t images = 240;             // training images; val/test each get images/2
    size_t regions_per_image = 6;
    size_t feature_dim = 32;
    size_t embed_dim = 16;
    double intra_supercluster_separation = 2.0; // category offset radius in feature space
    double noise = 0.5;                          // per-dim feature noise scale
    double proposal_jitter = 0.35;               // relative box jitter
    uint64_t seed = 0;

    void validate() const;
};

struct WorldPaths {
    std::string dir;

    std::string train_features() const { return dir + "/train_features.qarf"; }
    std::string train_annotations() const { return dir + "/train_annotations.jsonl"; }
    std::string val_features() const { return dir + "/val_features.qarf"; }
    std::string val_annotations() const { return dir + "/val_annotations.jsonl"; }
    std::string test_features() const { return dir + "/test_features.qarf"; }
    std::string test_annotations() const { return dir + "/test_annotations.jsonl"; }
    std::string word_vectors() const { return dir + "/word_vectors.txt"; }
    std::string taxonomy() const { return dir + "/taxonomy.tsv"; }
    std::string cooc_totals() const { return dir + "/cooc_totals.tsv"; }
    std::string cooc_pairs() const { return dir + "/cooc_pairs.tsv"; }
    std::string queries() const { return dir + "/queries.txt"; }
    std::string world() const { return dir + "/world.json"; }
};

struct WorldInfo {
    std::vector<std::string> categories;                 // child categories
    std::map<std::string, size_t> supercluster_of;       // child -> supercluster id
    std::map<std::string, std::string> parent_of;        // child -> group token
    std::vector<std::string> twins;                      // one per supercluster
    std::map<uint64_t, std::string> image_category;      // every generated image
};

// Writes the whole fixture family (features/annotations per split, word
// vectors, taxonomy, co-occurrence stats, queries, world metadata) into
// `out_dir`. Deterministic: the same spec produces byte-identical files.
WorldInfo generate_world(const SyntheticWorldSpec& spec, const std::string& out_dir);

WorldInfo load_world_info(const std::string& path);

} // namespace qar
