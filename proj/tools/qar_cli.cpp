// Command-line front end. Everything goes through the C API in qar_c.h, so
// this file doubles as a usage example for the shared library.

#include <cinttypes>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qar/qar_c.h"

namespace {

[[noreturn]] void die(qar_status status) {
    std::fprintf(stderr, "error: %s\n", qar_last_error());
    std::exit(status == QAR_OK ? 1 : static_cast<int>(status));
}

void check(qar_status status) {
    if (status != QAR_OK) die(status);
}

template <typename T, void (*Free)(T*)>
using handle = std::unique_ptr<T, decltype([](T* p) { Free(p); })>;

using word_vectors_ptr = handle<qar_word_vectors, qar_word_vectors_free>;
using features_ptr = handle<qar_features, qar_features_free>;
using annotations_ptr = handle<qar_annotations, qar_annotations_free>;
using params_ptr = handle<qar_params, qar_params_free>;
using taxonomy_ptr = handle<qar_taxonomy, qar_taxonomy_free>;
using cooc_ptr = handle<qar_cooccurrence, qar_cooccurrence_free>;
using confusion_ptr = handle<qar_confusion, qar_confusion_free>;
using index_ptr = handle<qar_index, qar_index_free>;

word_vectors_ptr open_word_vectors(const std::string& path) {
    qar_word_vectors* p = nullptr;
    check(qar_word_vectors_open(path.c_str(), &p));
    return word_vectors_ptr(p);
}

features_ptr open_features(const std::string& path) {
    qar_features* p = nullptr;
    check(qar_features_open(path.c_str(), &p));
    return features_ptr(p);
}

annotations_ptr open_annotations(const std::string& path) {
    qar_annotations* p = nullptr;
    check(qar_annotations_open(path.c_str(), &p));
    return annotations_ptr(p);
}

params_ptr open_params(const std::string& path) {
    qar_params* p = nullptr;
    check(qar_params_open(path.c_str(), &p));
    return params_ptr(p);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"open-vocabulary object retrieval: detector generation, NPA training, "
                 "IVFADC indexing and search"};
    app.require_subcommand(1);

    // ---- gen-fixtures ----
    auto* gen = app.add_subcommand("gen-fixtures", "generate a synthetic confusable-category world");
    qar_world_options world;
    qar_world_options_init(&world);
    std::string gen_out;
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--seed", world.seed, "rng seed");
    gen->add_option("--superclusters", world.superclusters, "supercluster count");
    gen->add_option("--categories-per-supercluster", world.categories_per_supercluster,
                    "categories per supercluster");
    gen->add_option("--images", world.images, "training images (val/test each get half)");
    gen->add_option("--regions-per-image", world.regions_per_image, "proposals per image");
    gen->add_option("--feature-dim", world.feature_dim, "region feature dimension");
    gen->add_option("--embed-dim", world.embed_dim, "word vector dimension");
    gen->add_option("--intra-separation", world.intra_supercluster_separation,
                    "category offset radius inside a supercluster");
    gen->add_option("--noise", world.noise, "feature noise scale");
    gen->add_option("--jitter", world.proposal_jitter, "relative proposal jitter");

    // ---- train ----
    auto* train = app.add_subcommand("train", "train the detector generator");
    std::string tr_features, tr_annotations, tr_wv, tr_out;
    std::string tr_taxonomy, tr_val_features, tr_val_annotations;
    std::vector<std::string> tr_cooc;
    qar_train_options topt;
    qar_train_options_init(&topt);
    bool tr_npa = false;
    size_t tr_hidden = 16;
    train->add_option("--features", tr_features, "training feature file (QARF)")->required();
    train->add_option("--annotations", tr_annotations, "training annotations (JSONL)")->required();
    train->add_option("--word-vectors", tr_wv, "word vector file")->required();
    train->add_flag("--npa", tr_npa, "enable negative phrase augmentation");
    train->add_option("--taxonomy", tr_taxonomy, "taxonomy TSV (NPA)");
    train->add_option("--cooc", tr_cooc, "co-occurrence totals and pairs TSVs (NPA)")
        ->expected(2);
    train->add_option("--val-features", tr_val_features, "validation feature file (NPA)");
    train->add_option("--val-annotations", tr_val_annotations, "validation annotations (NPA)");
    train->add_option("--iters", topt.iterations, "training iterations")->required();
    train->add_option("--lr", topt.learning_rate, "Adam learning rate");
    train->add_option("--seed", topt.seed, "rng seed");
    train->add_option("--out", tr_out, "output parameter file (QARW)")->required();
    train->add_option("--hidden-dim", tr_hidden, "regressor hidden width");
    train->add_option("--lambda", topt.regression_loss_weight, "regression loss weight");
    train->add_option("--npa-per-phrase", topt.npa_negatives_per_phrase,
                      "negative phrases per positive phrase");
    train->add_option("--npa-interval", topt.confusion_refresh_interval,
                      "confusion table refresh interval (iterations)");
    train->add_option("--npa-min-frequency", topt.confusion_min_frequency,
                      "category frequency floor for confusion entries");

    // ---- build-confusion ----
    auto* conf = app.add_subcommand("build-confusion", "mine and write a confusion table");
    std::string cf_params, cf_val_features, cf_val_annotations, cf_taxonomy, cf_wv, cf_out;
    std::vector<std::string> cf_cooc;
    conf->add_option("--params", cf_params, "generator parameters (QARW)")->required();
    conf->add_option("--word-vectors", cf_wv, "word vector file")->required();
    conf->add_option("--val-features", cf_val_features, "validation feature file")->required();
    conf->add_option("--val-annotations", cf_val_annotations, "validation annotations")->required();
    conf->add_option("--taxonomy", cf_taxonomy, "taxonomy TSV")->required();
    conf->add_option("--cooc", cf_cooc, "co-occurrence totals and pairs TSVs")->expected(2)->required();
    conf->add_option("--out", cf_out, "output JSON table")->required();

    // ---- build-index ----
    auto* build = app.add_subcommand("build-index", "build an IVFADC index from features");
    std::string bi_features, bi_out;
    size_t bi_nlist = 0, bi_m = 8, bi_ksub = 256, bi_iters = 25;
    uint64_t bi_seed = 0;
    build->add_option("--features", bi_features, "feature file (QARF)")->required();
    build->add_option("--nlist", bi_nlist, "inverted lists (0 = power of two near sqrt(N))");
    build->add_option("--m", bi_m, "product quantizer subspaces");
    build->add_option("--ksub", bi_ksub, "codewords per subspace (<= 256)");
    build->add_option("--kmeans-iters", bi_iters, "k-means iterations");
    build->add_option("--seed", bi_seed, "rng seed");
    build->add_option("--out", bi_out, "output index file (QARX)")->required();

    // ---- query ----
    auto* query = app.add_subcommand("query", "retrieve regions for a text query");
    std::string q_index, q_params, q_wv, q_text, q_exact;
    size_t q_topk = 10, q_nprobe = 8;
    query->add_option("--index", q_index, "index file (QARX)");
    query->add_option("--params", q_params, "generator parameters (QARW)")->required();
    query->add_option("--word-vectors", q_wv, "word vector file")->required();
    query->add_option("--text", q_text, "query phrase")->required();
    query->add_option("--topk", q_topk, "results to return");
    query->add_option("--nprobe", q_nprobe, "inverted lists to scan");
    query->add_option("--exact", q_exact, "feature file for exhaustive search instead of an index");

    // ---- eval ----
    auto* eval = app.add_subcommand("eval", "rank every query and report metrics");
    std::string ev_index, ev_features, ev_params, ev_wv, ev_annotations, ev_queries, ev_out;
    double ev_iou = 0.5;
    size_t ev_nprobe = 0;
    eval->add_option("--index", ev_index, "index file (QARX)");
    eval->add_option("--features", ev_features, "feature file for exact ranking");
    eval->add_option("--params", ev_params, "generator parameters (QARW)")->required();
    eval->add_option("--word-vectors", ev_wv, "word vector file")->required();
    eval->add_option("--annotations", ev_annotations, "ground-truth annotations (JSONL)")->required();
    eval->add_option("--queries", ev_queries, "query list, one phrase per line")->required();
    eval->add_option("--iou", ev_iou, "IoU threshold for a true positive");
    eval->add_option("--nprobe", ev_nprobe, "lists to scan in index mode (0 = all)");
    eval->add_option("--out", ev_out, "output report JSON")->required();

    CLI11_PARSE(app, argc, argv);

    if (gen->parsed()) {
        check(qar_generate_world(&world, gen_out.c_str()));
        std::printf("world written to %s\n", gen_out.c_str());
        return 0;
    }

    if (train->parsed()) {
        auto features = open_features(tr_features);
        auto annotations = open_annotations(tr_annotations);
        auto wv = open_word_vectors(tr_wv);
        topt.npa_enabled = tr_npa ? 1 : 0;

        taxonomy_ptr taxonomy;
        cooc_ptr cooc;
        features_ptr val_features;
        annotations_ptr val_annotations;
        if (tr_npa) {
            if (tr_taxonomy.empty() || tr_cooc.size() != 2 || tr_val_features.empty() ||
                tr_val_annotations.empty()) {
                std::fprintf(stderr,
                             "error: --npa needs --taxonomy, --cooc TOTALS PAIRS, "
                             "--val-features, --val-annotations\n");
                return 1;
            }
            qar_taxonomy* t = nullptr;
            check(qar_taxonomy_open(tr_taxonomy.c_str(), &t));
            taxonomy.reset(t);
            qar_cooccurrence* c = nullptr;
            check(qar_cooccurrence_open(tr_cooc[0].c_str(), tr_cooc[1].c_str(), &c));
            cooc.reset(c);
            val_features = open_features(tr_val_features);
            val_annotations = open_annotations(tr_val_annotations);
        }

        qar_params* raw = nullptr;
        check(qar_params_create(qar_word_vectors_dim(wv.get()), qar_features_dim(features.get()),
                                tr_hidden, topt.seed, &raw));
        params_ptr params(raw);
        check(qar_train(params.get(), features.get(), annotations.get(), wv.get(), &topt,
                        taxonomy.get(), cooc.get(), val_features.get(), val_annotations.get()));
        check(qar_params_save(params.get(), tr_out.c_str()));
        std::printf("parameters written to %s\n", tr_out.c_str());
        return 0;
    }

    if (conf->parsed()) {
        auto params = open_params(cf_params);
        auto wv = open_word_vectors(cf_wv);
        auto val_features = open_features(cf_val_features);
        auto val_annotations = open_annotations(cf_val_annotations);
        qar_taxonomy* t = nullptr;
        check(qar_taxonomy_open(cf_taxonomy.c_str(), &t));
        taxonomy_ptr taxonomy(t);
        qar_cooccurrence* c = nullptr;
        check(qar_cooccurrence_open(cf_cooc[0].c_str(), cf_cooc[1].c_str(), &c));
        cooc_ptr cooc(c);
        qar_confusion* table = nullptr;
        check(qar_build_confusion(params.get(), wv.get(), val_features.get(),
                                  val_annotations.get(), taxonomy.get(), cooc.get(), &table));
        confusion_ptr guard(table);
        check(qar_confusion_save(table, cf_out.c_str()));
        std::printf("confusion table with %zu entries written to %s\n",
                    qar_confusion_count(table), cf_out.c_str());
        return 0;
    }

    if (build->parsed()) {
        auto features = open_features(bi_features);
        qar_index* raw = nullptr;
        check(qar_index_build(features.get(), bi_nlist, bi_m, bi_ksub, bi_iters, bi_seed, &raw));
        index_ptr index(raw);
        check(qar_index_save(index.get(), bi_out.c_str()));
        std::printf("index with %zu postings in %zu lists written to %s\n",
                    qar_index_count(index.get()), qar_index_nlist(index.get()), bi_out.c_str());
        return 0;
    }

    if (query->parsed()) {
        if (q_index.empty() == q_exact.empty()) {
            std::fprintf(stderr, "error: give exactly one of --index or --exact FEATURES\n");
            return 1;
        }
        auto params = open_params(q_params);
        auto wv = open_word_vectors(q_wv);
        index_ptr index;
        features_ptr features;
        if (!q_index.empty()) {
            qar_index* raw = nullptr;
            check(qar_index_open(q_index.c_str(), &raw));
            index.reset(raw);
        } else {
            features = open_features(q_exact);
        }
        std::vector<qar_hit> hits(q_topk);
        size_t count = hits.size();
        check(qar_query(index.get(), features.get(), params.get(), wv.get(), q_text.c_str(),
                        q_topk, q_nprobe, hits.data(), &count));
        for (size_t i = 0; i < count; ++i) {
            const qar_hit& h = hits[i];
            std::printf("{\"rank\": %zu, \"image_id\": %" PRIu64 ", \"region_id\": %u, "
                        "\"score\": %.9g, \"box\": [%.9g, %.9g, %.9g, %.9g]}\n",
                        i + 1, h.image_id, h.region_id, h.score, h.regressed_box[0],
                        h.regressed_box[1], h.regressed_box[2], h.regressed_box[3]);
        }
        return 0;
    }

    if (eval->parsed()) {
        if (ev_index.empty() == ev_features.empty()) {
            std::fprintf(stderr, "error: give exactly one of --index or --features\n");
            return 1;
        }
        auto params = open_params(ev_params);
        auto wv = open_word_vectors(ev_wv);
        auto annotations = open_annotations(ev_annotations);
        index_ptr index;
        features_ptr features;
        if (!ev_index.empty()) {
            qar_index* raw = nullptr;
            check(qar_index_open(ev_index.c_str(), &raw));
            index.reset(raw);
        } else {
            features = open_features(ev_features);
        }
        check(qar_evaluate(index.get(), features.get(), params.get(), wv.get(), annotations.get(),
                           ev_queries.c_str(), ev_iou, ev_nprobe, ev_out.c_str()));
        std::printf("report written to %s\n", ev_out.c_str());
        return 0;
    }

    return 1;
}
