/*
 * C API for the query-adaptive object retrieval library.
 *
 * Every object is an opaque handle created by a qar_*_open/build/create call
 * and released with the matching qar_*_free. Functions return QAR_OK on
 * success; on failure they return an error code and qar_last_error() yields a
 * one-line diagnostic for the calling thread.
 */

#ifndef QAR_C_H
#define QAR_C_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum qar_status {
    QAR_OK = 0,
    QAR_ERR_INVALID_ARGUMENT = 1,
    QAR_ERR_IO = 2,
    QAR_ERR_FORMAT = 3,
    QAR_ERR_OOV = 4,       /* query/category has no in-vocabulary token */
    QAR_ERR_EMPTY = 5,     /* nothing to score or rank */
    QAR_ERR_INTERNAL = 6
} qar_status;

/* Message for the last failing call on this thread; never NULL. */
const char* qar_last_error(void);

/* ---- handles ---------------------------------------------------------- */

typedef struct qar_word_vectors qar_word_vectors; /* token -> vector table   */
typedef struct qar_features qar_features;         /* region feature file     */
typedef struct qar_annotations qar_annotations;   /* phrase/box annotations  */
typedef struct qar_params qar_params;             /* detector generator      */
typedef struct qar_taxonomy qar_taxonomy;         /* category hierarchy      */
typedef struct qar_cooccurrence qar_cooccurrence; /* co-annotation counts    */
typedef struct qar_confusion qar_confusion;       /* hard-negative table     */
typedef struct qar_index qar_index;               /* IVFADC index            */

qar_status qar_word_vectors_open(const char* path, qar_word_vectors** out);
void qar_word_vectors_free(qar_word_vectors* handle);
size_t qar_word_vectors_dim(const qar_word_vectors* handle);
size_t qar_word_vectors_count(const qar_word_vectors* handle);

qar_status qar_features_open(const char* path, qar_features** out);
void qar_features_free(qar_features* handle);
size_t qar_features_count(const qar_features* handle);
size_t qar_features_dim(const qar_features* handle);

qar_status qar_annotations_open(const char* path, qar_annotations** out);
void qar_annotations_free(qar_annotations* handle);
size_t qar_annotations_count(const qar_annotations* handle);

qar_status qar_params_open(const char* path, qar_params** out);
qar_status qar_params_create(size_t embed_dim, size_t feature_dim, size_t hidden_dim,
                             uint64_t seed, qar_params** out);
qar_status qar_params_save(const qar_params* handle, const char* path);
void qar_params_free(qar_params* handle);

qar_status qar_taxonomy_open(const char* path, qar_taxonomy** out);
void qar_taxonomy_free(qar_taxonomy* handle);

qar_status qar_cooccurrence_open(const char* totals_path, const char* pairs_path,
                                 qar_cooccurrence** out);
void qar_cooccurrence_free(qar_cooccurrence* handle);

qar_status qar_confusion_open(const char* path, qar_confusion** out);
qar_status qar_confusion_save(const qar_confusion* handle, const char* path);
void qar_confusion_free(qar_confusion* handle);
size_t qar_confusion_count(const qar_confusion* handle);

/* ---- training --------------------------------------------------------- */

typedef struct qar_train_options {
    double learning_rate;               /* default 1e-5 */
    long long iterations;
    double regression_loss_weight;      /* default 1.0 */
    double smooth_l1_delta;             /* default 1.0 */
    uint64_t seed;
    int npa_enabled;                    /* needs taxonomy/cooc/val inputs */
    long long npa_negatives_per_phrase; /* default 1 */
    long long confusion_refresh_interval; /* default 10000 */
    long long confusion_min_frequency;    /* default 50 */
} qar_train_options;

void qar_train_options_init(qar_train_options* options);

/* Updates `params` in place. The NPA arguments may be NULL when
 * npa_enabled is 0. */
qar_status qar_train(qar_params* params, const qar_features* features,
                     const qar_annotations* annotations, const qar_word_vectors* word_vectors,
                     const qar_train_options* options, const qar_taxonomy* taxonomy,
                     const qar_cooccurrence* cooc, const qar_features* val_features,
                     const qar_annotations* val_annotations);

qar_status qar_build_confusion(const qar_params* params, const qar_word_vectors* word_vectors,
                               const qar_features* val_features,
                               const qar_annotations* val_annotations,
                               const qar_taxonomy* taxonomy, const qar_cooccurrence* cooc,
                               qar_confusion** out);

/* ---- indexing and search ---------------------------------------------- */

/* nlist == 0 picks the power of two nearest sqrt(N). */
qar_status qar_index_build(const qar_features* features, size_t nlist, size_t m, size_t ksub,
                           size_t kmeans_iterations, uint64_t seed, qar_index** out);
qar_status qar_index_open(const char* path, qar_index** out);
qar_status qar_index_save(const qar_index* handle, const char* path);
void qar_index_free(qar_index* handle);
size_t qar_index_count(const qar_index* handle);
size_t qar_index_nlist(const qar_index* handle);

typedef struct qar_hit {
    uint64_t image_id;
    uint32_t region_id;
    double score;
    double proposal_box[4];  /* x1, y1, x2, y2 */
    double regressed_box[4];
} qar_hit;

/* Ranks regions for a text query and regresses each returned box. Exactly one
 * of `index` (ADC search, uses nprobe) and `features` (exhaustive scan) must
 * be non-NULL. `hits` must hold `*count` entries; on return *count is the
 * number written. */
qar_status qar_query(const qar_index* index, const qar_features* features,
                     const qar_params* params, const qar_word_vectors* word_vectors,
                     const char* text, size_t topk, size_t nprobe, qar_hit* hits, size_t* count);

/* ---- evaluation -------------------------------------------------------- */

/* Writes the metric report (per-query AP/PR@10/PR@100, mAP, localization
 * accuracy grid) as JSON to `report_path`. Exactly one of index/features.
 * nprobe == 0 scans every list in index mode. */
qar_status qar_evaluate(const qar_index* index, const qar_features* features,
                        const qar_params* params, const qar_word_vectors* word_vectors,
                        const qar_annotations* annotations, const char* queries_path,
                        double iou_threshold, size_t nprobe, const char* report_path);

/* ---- synthetic fixture generation -------------------------------------- */

typedef struct qar_world_options {
    size_t superclusters;               /* default 5 */
    size_t categories_per_supercluster; /* default 3 */
    size_t images;                      /* default 240 training images */
    size_t regions_per_image;           /* default 6 */
    size_t feature_dim;                 /* default 32 */
    size_t embed_dim;                   /* default 16 */
    double intra_supercluster_separation; /* default 2.0 */
    double noise;                         /* default 0.5 */
    double proposal_jitter;               /* default 0.35 */
    uint64_t seed;
} qar_world_options;

void qar_world_options_init(qar_world_options* options);

/* Writes train/val/test features and annotations, word vectors, taxonomy,
 * co-occurrence tables, queries, and world metadata into out_dir. */
qar_status qar_generate_world(const qar_world_options* options, const char* out_dir);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* QAR_C_H */
