#include "qar/training.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <numeric>

#include "qar/error.hpp"
#include "qar/rng.hpp"

namespace qar {

namespace {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

// -[y ln s(x) + (1-y) ln(1-s(x))], computed from the logit
double bce_with_logits(double x, double y) {
    return std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
}

double smooth_l1(double x, double delta) {
    double ax = std::abs(x);
    if (ax < delta) return 0.5 * x * x / delta;
    return ax - 0.5 * delta;
}

double smooth_l1_grad(double x, double delta) {
    if (std::abs(x) < delta) return x / delta;
    return x > 0.0 ? 1.0 : -1.0;
}

std::array<std::vector<double>*, 11> tensors(GeneratorParams& p) {
    return {&p.W,     &p.H1,    &p.b1,    &p.H2[0], &p.H2[1], &p.H2[2],
            &p.H2[3], &p.b2[0], &p.b2[1], &p.b2[2], &p.b2[3]};
}

std::array<const std::vector<double>*, 11> tensors(const GeneratorParams& p) {
    return {&p.W,     &p.H1,    &p.b1,    &p.H2[0], &p.H2[1], &p.H2[2],
            &p.H2[3], &p.b2[0], &p.b2[1], &p.b2[2], &p.b2[3]};
}

} // namespace

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) fail(ErrorCode::InvalidArgument, "learning_rate must be positive");
    if (regression_loss_weight < 0.0) {
        fail(ErrorCode::InvalidArgument, "regression_loss_weight must be non-negative");
    }
    if (smooth_l1_delta <= 0.0) fail(ErrorCode::InvalidArgument, "smooth_l1_delta must be positive");
    if (npa_enabled) {
        if (npa_negatives_per_phrase == 0) {
            fail(ErrorCode::InvalidArgument, "npa_negatives_per_phrase must be positive");
        }
        if (confusion_refresh_interval == 0) {
            fail(ErrorCode::InvalidArgument, "confusion_refresh_interval must be positive");
        }
    }
}

MinibatchLoss compute_minibatch_loss(const GeneratorParams& params,
                                     const std::vector<RegionFeature>& regions,
                                     const std::vector<PhraseRow>& rows, const LabelMatrix& labels,
                                     double regression_loss_weight, double smooth_l1_delta) {
    params.validate();
    if (regions.empty()) fail(ErrorCode::InvalidArgument, "minibatch has no regions");
    if (rows.empty()) fail(ErrorCode::InvalidArgument, "minibatch has no phrase rows");
    if (labels.rows() != rows.size() || labels.cols() != regions.size()) {
        fail(ErrorCode::InvalidArgument, "label matrix shape does not match minibatch");
    }

    const size_t d = params.embed_dim;
    const size_t f = params.feature_dim;
    const size_t h = params.hidden_dim;
    const size_t n_r = regions.size();
    const size_t n_c = rows.size();

    for (const auto& r : regions) {
        if (r.feature.size() != f) {
            fail(ErrorCode::InvalidArgument, "region feature length does not match generator");
        }
    }
    for (const auto& row : rows) {
        if (row.v.v.size() != d) {
            fail(ErrorCode::InvalidArgument, "phrase embedding length does not match generator");
        }
    }

    // Forward pass, cached per row for the backward pass.
    struct RowState {
        std::vector<double> w_c;          // f
        std::vector<double> z;            // h, pre-activation
        std::vector<double> hidden;       // h
        std::array<std::vector<double>, 4> u; // f each
        std::vector<double> scores;       // n_r
    };
    std::vector<RowState> states(n_c);

    size_t scored_cells = 0;
    size_t positive_cells = 0;
    for (size_t c = 0; c < n_c; ++c) {
        for (size_t r = 0; r < n_r; ++r) {
            Label l = labels.at(c, r);
            if (l == Label::Ignore) continue;
            ++scored_cells;
            if (l == Label::Pos) ++positive_cells;
        }
    }
    if (scored_cells == 0) {
        fail(ErrorCode::Empty, "degenerate minibatch: every cell is IGNORE");
    }

    double cls_sum = 0.0;
    double reg_sum = 0.0;

    for (size_t c = 0; c < n_c; ++c) {
        RowState& st = states[c];
        const std::vector<double>& v = rows[c].v.v;

        st.w_c.assign(f, 0.0);
        for (size_t i = 0; i < f; ++i) {
            const double* wrow = params.W.data() + i * d;
            double acc = 0.0;
            for (size_t j = 0; j < d; ++j) acc += wrow[j] * v[j];
            st.w_c[i] = acc;
        }
        st.z.assign(h, 0.0);
        st.hidden.assign(h, 0.0);
        for (size_t i = 0; i < h; ++i) {
            const double* hrow = params.H1.data() + i * d;
            double acc = params.b1[i];
            for (size_t j = 0; j < d; ++j) acc += hrow[j] * v[j];
            st.z[i] = acc;
            st.hidden[i] = acc > 0.0 ? acc : 0.0;
        }
        for (int k = 0; k < 4; ++k) {
            st.u[k].assign(f, 0.0);
            const auto& H2 = params.H2[k];
            const auto& b2 = params.b2[k];
            for (size_t i = 0; i < f; ++i) {
                const double* row = H2.data() + i * h;
                double acc = b2[i];
                for (size_t j = 0; j < h; ++j) acc += row[j] * st.hidden[j];
                st.u[k][i] = acc;
            }
        }

        st.scores.assign(n_r, 0.0);
        for (size_t r = 0; r < n_r; ++r) {
            Label l = labels.at(c, r);
            if (l == Label::Ignore) continue;
            const auto& feat = regions[r].feature;
            double s = 0.0;
            for (size_t i = 0; i < f; ++i) s += st.w_c[i] * static_cast<double>(feat[i]);
            st.scores[r] = s;
            cls_sum += bce_with_logits(s, l == Label::Pos ? 1.0 : 0.0);

            if (l == Label::Pos) {
                BoxDeltas target = regression_targets(regions[r].box, rows[c].gt);
                for (int k = 0; k < 4; ++k) {
                    double pred = 0.0;
                    for (size_t i = 0; i < f; ++i) {
                        pred += st.u[k][i] * static_cast<double>(feat[i]);
                    }
                    reg_sum += smooth_l1(pred - target[k], smooth_l1_delta);
                }
            }
        }
    }

    MinibatchLoss out;
    out.scored_cells = scored_cells;
    out.positive_cells = positive_cells;
    out.classification = cls_sum / static_cast<double>(scored_cells);
    out.regression = positive_cells > 0 ? reg_sum / static_cast<double>(positive_cells) : 0.0;
    out.total = out.classification + regression_loss_weight * out.regression;
    out.gradients = GeneratorParams::zeros(d, f, h);

    // Backward pass.
    const double cls_scale = 1.0 / static_cast<double>(scored_cells);
    const double reg_scale =
        positive_cells > 0 ? regression_loss_weight / static_cast<double>(positive_cells) : 0.0;

    for (size_t c = 0; c < n_c; ++c) {
        RowState& st = states[c];
        const std::vector<double>& v = rows[c].v.v;

        std::vector<double> g_wc(f, 0.0);                  // dL/d w_c
        std::array<std::vector<double>, 4> g_u;            // dL/d u_k
        for (int k = 0; k < 4; ++k) g_u[k].assign(f, 0.0);
        bool row_has_pos = false;

        for (size_t r = 0; r < n_r; ++r) {
            Label l = labels.at(c, r);
            if (l == Label::Ignore) continue;
            const auto& feat = regions[r].feature;
            double y = l == Label::Pos ? 1.0 : 0.0;
            double ds = (sigmoid(st.scores[r]) - y) * cls_scale;
            for (size_t i = 0; i < f; ++i) g_wc[i] += ds * static_cast<double>(feat[i]);

            if (l == Label::Pos) {
                row_has_pos = true;
                BoxDeltas target = regression_targets(regions[r].box, rows[c].gt);
                for (int k = 0; k < 4; ++k) {
                    double pred = 0.0;
                    for (size_t i = 0; i < f; ++i) {
                        pred += st.u[k][i] * static_cast<double>(feat[i]);
                    }
                    double dpred = smooth_l1_grad(pred - target[k], smooth_l1_delta) * reg_scale;
                    for (size_t i = 0; i < f; ++i) {
                        g_u[k][i] += dpred * static_cast<double>(feat[i]);
                    }
                }
            }
        }

        // dW += g_wc v^T
        for (size_t i = 0; i < f; ++i) {
            if (g_wc[i] == 0.0) continue;
            double* wrow = out.gradients.W.data() + i * d;
            for (size_t j = 0; j < d; ++j) wrow[j] += g_wc[i] * v[j];
        }

        if (!row_has_pos) continue;

        std::vector<double> g_hidden(h, 0.0);
        for (int k = 0; k < 4; ++k) {
            auto& gH2 = out.gradients.H2[k];
            auto& gb2 = out.gradients.b2[k];
            const auto& H2 = params.H2[k];
            for (size_t i = 0; i < f; ++i) {
                double gu = g_u[k][i];
                if (gu == 0.0) continue;
                gb2[i] += gu;
                double* grow = gH2.data() + i * h;
                const double* prow = H2.data() + i * h;
                for (size_t j = 0; j < h; ++j) {
                    grow[j] += gu * st.hidden[j];
                    g_hidden[j] += gu * prow[j];
                }
            }
        }
        for (size_t i = 0; i < h; ++i) {
            if (st.z[i] <= 0.0 || g_hidden[i] == 0.0) continue;
            out.gradients.b1[i] += g_hidden[i];
            double* grow = out.gradients.H1.data() + i * d;
            for (size_t j = 0; j < d; ++j) grow[j] += g_hidden[i] * v[j];
        }
    }

    return out;
}

MinibatchLoss compute_minibatch_loss(const GeneratorParams& params, const AnnotatedImage& image,
                                     const LabelMatrix& labels, const WordVectorTable& table,
                                     double regression_loss_weight, double smooth_l1_delta) {
    auto rows = make_phrase_rows(image, table);
    return compute_minibatch_loss(params, image.regions, rows, labels, regression_loss_weight,
                                  smooth_l1_delta);
}

AdamOptimizer::AdamOptimizer(const GeneratorParams& shape, double learning_rate, double beta1,
                             double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), epsilon_(epsilon),
      m_(GeneratorParams::zeros(shape.embed_dim, shape.feature_dim, shape.hidden_dim)),
      v_(GeneratorParams::zeros(shape.embed_dim, shape.feature_dim, shape.hidden_dim)) {}

void AdamOptimizer::step(GeneratorParams& params, const ParamGradients& gradients) {
    ++t_;
    double bias1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bias2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto ps = tensors(params);
    auto gs = tensors(gradients);
    auto ms = tensors(m_);
    auto vs = tensors(v_);
    for (size_t t = 0; t < ps.size(); ++t) {
        auto& p = *ps[t];
        const auto& g = *gs[t];
        auto& m = *ms[t];
        auto& v = *vs[t];
        for (size_t i = 0; i < p.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            double mhat = m[i] / bias1;
            double vhat = v[i] / bias2;
            p[i] -= lr_ * mhat / (std::sqrt(vhat) + epsilon_);
        }
    }
}

TrainResult train(const GeneratorParams& init, const std::vector<AnnotatedImage>& dataset,
                  const WordVectorTable& table, const TrainConfig& config, const NpaInputs* npa) {
    init.validate();
    config.validate();
    if (dataset.empty()) fail(ErrorCode::InvalidArgument, "empty training dataset");
    for (const auto& image : dataset) image.validate();
    const bool use_npa = config.npa_enabled && npa != nullptr;
    if (config.npa_enabled && npa == nullptr) {
        fail(ErrorCode::InvalidArgument, "NPA enabled but no taxonomy/co-occurrence/valset given");
    }

    TrainResult result;
    result.params = init;
    result.loss_history.reserve(config.iterations);

    AdamOptimizer optimizer(init, config.learning_rate, config.adam_beta1, config.adam_beta2,
                            config.adam_epsilon);

    Rng shuffle_rng(config.seed);
    std::vector<size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    size_t cursor = order.size(); // forces a shuffle before the first step

    // Category frequencies for confusion rebuilds: a sliding window of the
    // last confusion_refresh_interval minibatches, or the whole dataset when
    // it is smaller than the window.
    const bool window_is_whole_dataset = use_npa && dataset.size() < config.confusion_refresh_interval;
    std::map<std::string, size_t> window_counts;
    std::deque<std::vector<std::string>> window;
    if (window_is_whole_dataset) {
        for (const auto& image : dataset) {
            for (const auto& [phrase, gt] : image.phrases) {
                ++window_counts[extract_head_noun(phrase, npa->noun_lexicon).token];
            }
        }
    }

    bool have_table = false;

    for (size_t iter = 1; iter <= config.iterations; ++iter) {
        if (cursor == order.size()) {
            shuffle_rng.shuffle(order);
            cursor = 0;
        }
        const AnnotatedImage& image = dataset[order[cursor++]];

        auto rows = make_phrase_rows(image, table);
        LabelMatrix labels = assign_labels(image);

        if (use_npa) {
            if (!window_is_whole_dataset) {
                std::vector<std::string> heads;
                heads.reserve(image.phrases.size());
                for (const auto& [phrase, gt] : image.phrases) {
                    heads.push_back(extract_head_noun(phrase, npa->noun_lexicon).token);
                }
                for (const auto& head : heads) ++window_counts[head];
                window.push_back(std::move(heads));
                if (window.size() > config.confusion_refresh_interval) {
                    for (const auto& head : window.front()) {
                        auto it = window_counts.find(head);
                        if (it != window_counts.end() && --it->second == 0) window_counts.erase(it);
                    }
                    window.pop_front();
                }
            }
            if (have_table) {
                Rng aug_rng = Rng::derive(config.seed, iter);
                result.augmented_rows +=
                    augment_minibatch(rows, labels, result.confusion, table, npa->noun_lexicon,
                                      config.npa_negatives_per_phrase, aug_rng);
            }
        }

        MinibatchLoss loss = compute_minibatch_loss(result.params, image.regions, rows, labels,
                                                    config.regression_loss_weight,
                                                    config.smooth_l1_delta);
        // step schedule: the configured rate is the starting rate, dropped
        // tenfold for the last third of the run
        optimizer.set_learning_rate(iter > (2 * config.iterations) / 3
                                        ? config.learning_rate * 0.1
                                        : config.learning_rate);
        optimizer.step(result.params, loss.gradients);
        result.loss_history.push_back(loss.total);

        if (use_npa && iter % config.confusion_refresh_interval == 0) {
            std::vector<std::string> categories;
            for (const auto& [category, count] : window_counts) {
                if (count < config.confusion_min_frequency) continue;
                if (!table.contains(category)) continue;
                categories.push_back(category);
            }
            if (!categories.empty()) {
                result.confusion =
                    build_confusion_table(result.params, table, npa->valset, npa->taxonomy,
                                          npa->cooc, categories);
                have_table = !result.confusion.empty();
                result.confusion_rebuilds.push_back(iter);
            }
        }
    }

    return result;
}

} // namespace qar
