#include "qar/qar_c.h"

#include <algorithm>
#include <cstring>
#include <set>
#include <string>

#include "qar/embedding.hpp"
#include "qar/error.hpp"
#include "qar/eval.hpp"
#include "qar/features.hpp"
#include "qar/fixtures.hpp"
#include "qar/io.hpp"
#include "qar/ivfadc.hpp"
#include "qar/npa.hpp"
#include "qar/retrieval.hpp"
#include "qar/training.hpp"

namespace {

thread_local std::string g_last_error = "ok";

qar_status code_of(const qar::Error& e) {
    switch (e.code()) {
        case qar::ErrorCode::InvalidArgument: return QAR_ERR_INVALID_ARGUMENT;
        case qar::ErrorCode::Io: return QAR_ERR_IO;
        case qar::ErrorCode::Format: return QAR_ERR_FORMAT;
        case qar::ErrorCode::OutOfVocabulary: return QAR_ERR_OOV;
        case qar::ErrorCode::Empty: return QAR_ERR_EMPTY;
        case qar::ErrorCode::Internal: return QAR_ERR_INTERNAL;
    }
    return QAR_ERR_INTERNAL;
}

template <typename Fn>
qar_status guarded(Fn&& fn) {
    try {
        fn();
        return QAR_OK;
    } catch (const qar::Error& e) {
        g_last_error = e.what();
        return code_of(e);
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return QAR_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown error";
        return QAR_ERR_INTERNAL;
    }
}

qar_status invalid(const char* message) {
    g_last_error = message;
    return QAR_ERR_INVALID_ARGUMENT;
}

std::set<std::string> npa_lexicon(const qar::Taxonomy& taxonomy, const qar::CooccurrenceStats& cooc,
                                  const std::vector<qar::LabeledObject>& valset) {
    std::set<std::string> lexicon = taxonomy.nodes();
    for (const auto& [cat, n] : cooc.totals()) lexicon.insert(cat);
    for (const auto& obj : valset) lexicon.insert(obj.category);
    return lexicon;
}

} // namespace

struct qar_word_vectors {
    qar::WordVectorTable table;
};
struct qar_features {
    qar::FeatureSet set;
};
struct qar_annotations {
    std::vector<qar::AnnotationRecord> records;
};
struct qar_params {
    qar::GeneratorParams params;
};
struct qar_taxonomy {
    qar::Taxonomy taxonomy;
};
struct qar_cooccurrence {
    qar::CooccurrenceStats stats;
};
struct qar_confusion {
    qar::ConfusionTable table;
};
struct qar_index {
    qar::IvfadcIndex index;
};

extern "C" {

const char* qar_last_error(void) { return g_last_error.c_str(); }

qar_status qar_word_vectors_open(const char* path, qar_word_vectors** out) {
    if (!path || !out) return invalid("path and out must be non-NULL");
    return guarded([&]() { *out = new qar_word_vectors{qar::load_word_vectors(path)}; });
}

void qar_word_vectors_free(qar_word_vectors* handle) { delete handle; }

size_t qar_word_vectors_dim(const qar_word_vectors* handle) {
    return handle ? handle->table.dim() : 0;
}

size_t qar_word_vectors_count(const qar_word_vectors* handle) {
    return handle ? handle->table.size() : 0;
}

qar_status qar_features_open(const char* path, qar_features** out) {
    if (!path || !out) return invalid("path and out must be non-NULL");
    return guarded([&]() { *out = new qar_features{qar::read_feature_file(path)}; });
}

void qar_features_free(qar_features* handle) { delete handle; }

size_t qar_features_count(const qar_features* handle) { return handle ? handle->set.size() : 0; }

size_t qar_features_dim(const qar_features* handle) { return handle ? handle->set.dim() : 0; }

qar_status qar_annotations_open(const char* path, qar_annotations** out) {
    if (!path || !out) return invalid("path and out must be non-NULL");
    return guarded([&]() { *out = new qar_annotations{qar::load_annotations(path)}; });
}

void qar_annotations_free(qar_annotations* handle) { delete handle; }

size_t qar_annotations_count(const qar_annotations* handle) {
    return handle ? handle->records.size() : 0;
}

qar_status qar_params_open(const char* path, qar_params** out) {
    if (!path || !out) return invalid("path and out must be non-NULL");
    return guarded([&]() { *out = new qar_params{qar::load_generator_params(path)}; });
}

qar_status qar_params_create(size_t embed_dim, size_t feature_dim, size_t hidden_dim,
                             uint64_t seed, qar_params** out) {
    if (!out) return invalid("out must be non-NULL");
    return guarded([&]() {
        *out = new qar_params{
            qar::GeneratorParams::random_init(embed_dim, feature_dim, hidden_dim, seed)};
    });
}

qar_status qar_params_save(const qar_params* handle, const char* path) {
    if (!handle || !path) return invalid("params and path must be non-NULL");
    return guarded([&]() { qar::save_generator_params(path, handle->params); });
}

void qar_params_free(qar_params* handle) { delete handle; }

qar_status qar_taxonomy_open(const char* path, qar_taxonomy** out) {
    if (!path || !out) return invalid("path and out must be non-NULL");
    return guarded([&]() { *out = new qar_taxonomy{qar::Taxonomy::load_tsv(path)}; });
}

void qar_taxonomy_free(qar_taxonomy* handle) { delete handle; }

qar_status qar_cooccurrence_open(const char* totals_path, const char* pairs_path,
                                 qar_cooccurrence** out) {
    if (!totals_path || !pairs_path || !out) return invalid("paths and out must be non-NULL");
    return guarded([&]() {
        *out = new qar_cooccurrence{qar::CooccurrenceStats::load_tsv(totals_path, pairs_path)};
    });
}

void qar_cooccurrence_free(qar_cooccurrence* handle) { delete handle; }

qar_status qar_confusion_open(const char* path, qar_confusion** out) {
    if (!path || !out) return invalid("path and out must be non-NULL");
    return guarded([&]() { *out = new qar_confusion{qar::ConfusionTable::load_json(path)}; });
}

qar_status qar_confusion_save(const qar_confusion* handle, const char* path) {
    if (!handle || !path) return invalid("table and path must be non-NULL");
    return guarded([&]() { handle->table.save_json(path); });
}

void qar_confusion_free(qar_confusion* handle) { delete handle; }

size_t qar_confusion_count(const qar_confusion* handle) {
    return handle ? handle->table.size() : 0;
}

void qar_train_options_init(qar_train_options* options) {
    if (!options) return;
    options->learning_rate = 1e-5;
    options->iterations = 0;
    options->regression_loss_weight = 1.0;
    options->smooth_l1_delta = 1.0;
    options->seed = 0;
    options->npa_enabled = 0;
    options->npa_negatives_per_phrase = 1;
    options->confusion_refresh_interval = 10000;
    options->confusion_min_frequency = 50;
}

qar_status qar_train(qar_params* params, const qar_features* features,
                     const qar_annotations* annotations, const qar_word_vectors* word_vectors,
                     const qar_train_options* options, const qar_taxonomy* taxonomy,
                     const qar_cooccurrence* cooc, const qar_features* val_features,
                     const qar_annotations* val_annotations) {
    if (!params || !features || !annotations || !word_vectors || !options) {
        return invalid("params, features, annotations, word_vectors, options must be non-NULL");
    }
    if (options->iterations < 0 || options->npa_negatives_per_phrase < 0 ||
        options->confusion_refresh_interval < 0 || options->confusion_min_frequency < 0) {
        return invalid("negative training option");
    }
    if (options->npa_enabled && (!taxonomy || !cooc || !val_features || !val_annotations)) {
        return invalid("NPA training needs taxonomy, co-occurrence, and validation inputs");
    }
    return guarded([&]() {
        qar::TrainConfig config;
        config.learning_rate = options->learning_rate;
        config.iterations = static_cast<size_t>(options->iterations);
        config.regression_loss_weight = options->regression_loss_weight;
        config.smooth_l1_delta = options->smooth_l1_delta;
        config.seed = options->seed;
        config.npa_enabled = options->npa_enabled != 0;
        config.npa_negatives_per_phrase = static_cast<size_t>(options->npa_negatives_per_phrase);
        config.confusion_refresh_interval = static_cast<size_t>(options->confusion_refresh_interval);
        config.confusion_min_frequency = static_cast<size_t>(options->confusion_min_frequency);

        auto dataset = qar::build_annotated_images(features->set, annotations->records,
                                                   &word_vectors->table);

        qar::NpaInputs npa;
        const qar::NpaInputs* npa_ptr = nullptr;
        if (config.npa_enabled) {
            npa.taxonomy = taxonomy->taxonomy;
            npa.cooc = cooc->stats;
            std::set<std::string> lexicon = npa_lexicon(npa.taxonomy, npa.cooc, {});
            npa.valset = qar::label_objects(val_features->set, val_annotations->records, lexicon);
            npa.noun_lexicon = npa_lexicon(npa.taxonomy, npa.cooc, npa.valset);
            npa_ptr = &npa;
        }

        qar::TrainResult result =
            qar::train(params->params, dataset, word_vectors->table, config, npa_ptr);
        params->params = std::move(result.params);
    });
}

qar_status qar_build_confusion(const qar_params* params, const qar_word_vectors* word_vectors,
                               const qar_features* val_features,
                               const qar_annotations* val_annotations,
                               const qar_taxonomy* taxonomy, const qar_cooccurrence* cooc,
                               qar_confusion** out) {
    if (!params || !word_vectors || !val_features || !val_annotations || !taxonomy || !cooc ||
        !out) {
        return invalid("all confusion-table inputs must be non-NULL");
    }
    return guarded([&]() {
        std::set<std::string> lexicon = npa_lexicon(taxonomy->taxonomy, cooc->stats, {});
        auto valset = qar::label_objects(val_features->set, val_annotations->records, lexicon);
        std::set<std::string> categories_seen;
        for (const auto& obj : valset) categories_seen.insert(obj.category);
        std::vector<std::string> categories;
        for (const auto& cat : categories_seen) {
            if (word_vectors->table.contains(cat)) categories.push_back(cat);
        }
        auto table = qar::build_confusion_table(params->params, word_vectors->table, valset,
                                                taxonomy->taxonomy, cooc->stats, categories);
        *out = new qar_confusion{std::move(table)};
    });
}

qar_status qar_index_build(const qar_features* features, size_t nlist, size_t m, size_t ksub,
                           size_t kmeans_iterations, uint64_t seed, qar_index** out) {
    if (!features || !out) return invalid("features and out must be non-NULL");
    return guarded([&]() {
        qar::BuildOptions options;
        options.nlist = nlist;
        options.m = m;
        options.ksub = ksub;
        options.kmeans_iterations = kmeans_iterations;
        options.seed = seed;
        *out = new qar_index{qar::build_index(features->set, options)};
    });
}

qar_status qar_index_open(const char* path, qar_index** out) {
    if (!path || !out) return invalid("path and out must be non-NULL");
    return guarded([&]() { *out = new qar_index{qar::load_index(path)}; });
}

qar_status qar_index_save(const qar_index* handle, const char* path) {
    if (!handle || !path) return invalid("index and path must be non-NULL");
    return guarded([&]() { qar::save_index(path, handle->index); });
}

void qar_index_free(qar_index* handle) { delete handle; }

size_t qar_index_count(const qar_index* handle) { return handle ? handle->index.total() : 0; }

size_t qar_index_nlist(const qar_index* handle) {
    return handle ? handle->index.coarse.nlist : 0;
}

qar_status qar_query(const qar_index* index, const qar_features* features,
                     const qar_params* params, const qar_word_vectors* word_vectors,
                     const char* text, size_t topk, size_t nprobe, qar_hit* hits, size_t* count) {
    if (!params || !word_vectors || !text || !hits || !count) {
        return invalid("params, word_vectors, text, hits, count must be non-NULL");
    }
    if ((index == nullptr) == (features == nullptr)) {
        return invalid("exactly one of index/features must be given");
    }
    return guarded([&]() {
        auto results =
            qar::retrieve(index ? &index->index : nullptr, features ? &features->set : nullptr,
                          params->params, word_vectors->table, text, topk, nprobe);
        size_t n = std::min(*count, results.size());
        for (size_t i = 0; i < n; ++i) {
            const auto& r = results[i];
            hits[i].image_id = r.image_id;
            hits[i].region_id = r.region_id;
            hits[i].score = r.score;
            hits[i].proposal_box[0] = r.proposal_box.x1;
            hits[i].proposal_box[1] = r.proposal_box.y1;
            hits[i].proposal_box[2] = r.proposal_box.x2;
            hits[i].proposal_box[3] = r.proposal_box.y2;
            hits[i].regressed_box[0] = r.regressed_box.x1;
            hits[i].regressed_box[1] = r.regressed_box.y1;
            hits[i].regressed_box[2] = r.regressed_box.x2;
            hits[i].regressed_box[3] = r.regressed_box.y2;
        }
        *count = n;
    });
}

qar_status qar_evaluate(const qar_index* index, const qar_features* features,
                        const qar_params* params, const qar_word_vectors* word_vectors,
                        const qar_annotations* annotations, const char* queries_path,
                        double iou_threshold, size_t nprobe, const char* report_path) {
    if (!params || !word_vectors || !annotations || !queries_path || !report_path) {
        return invalid("params, word_vectors, annotations, queries_path, report_path required");
    }
    if ((index == nullptr) == (features == nullptr)) {
        return invalid("exactly one of index/features must be given");
    }
    return guarded([&]() {
        auto queries = qar::load_queries(queries_path);
        auto report = qar::evaluate_retrieval(
            params->params, word_vectors->table, annotations->records, queries, iou_threshold,
            index ? &index->index : nullptr, features ? &features->set : nullptr, nprobe);
        qar::save_report_json(report_path, report);
    });
}

void qar_world_options_init(qar_world_options* options) {
    if (!options) return;
    qar::SyntheticWorldSpec defaults;
    options->superclusters = defaults.superclusters;
    options->categories_per_supercluster = defaults.categories_per_supercluster;
    options->images = defaults.images;
    options->regions_per_image = defaults.regions_per_image;
    options->feature_dim = defaults.feature_dim;
    options->embed_dim = defaults.embed_dim;
    options->intra_supercluster_separation = defaults.intra_supercluster_separation;
    options->noise = defaults.noise;
    options->proposal_jitter = defaults.proposal_jitter;
    options->seed = defaults.seed;
}

qar_status qar_generate_world(const qar_world_options* options, const char* out_dir) {
    if (!options || !out_dir) return invalid("options and out_dir must be non-NULL");
    return guarded([&]() {
        qar::SyntheticWorldSpec spec;
        spec.superclusters = options->superclusters;
        spec.categories_per_supercluster = options->categories_per_supercluster;
        spec.images = options->images;
        spec.regions_per_image = options->regions_per_image;
        spec.feature_dim = options->feature_dim;
        spec.embed_dim = options->embed_dim;
        spec.intra_supercluster_separation = options->intra_supercluster_separation;
        spec.noise = options->noise;
        spec.proposal_jitter = options->proposal_jitter;
        spec.seed = options->seed;
        qar::generate_world(spec, out_dir);
    });
}

} // extern "C"
