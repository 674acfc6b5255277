#include "qar/fixtures.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "qar/error.hpp"
#include "qar/features.hpp"
#include "qar/geometry.hpp"
#include "qar/io.hpp"
#include "qar/rng.hpp"

namespace qar {

using nlohmann::json;

namespace {

// world constants that are not worth spec knobs
constexpr double kSuperclusterRadius = 2.5;  // feature-space supercluster centers
constexpr double kBackgroundRadius = 4.0;     // feature center of off-object content
constexpr double kJitterSignal = 12.0;        // norm of each box-offset feature direction
constexpr double kEmbedOffset = 0.5;          // word-vector spread inside a supercluster
constexpr double kParentLabelRate = 0.10;     // validation objects labeled with the group word
constexpr double kTwinLabelRate = 0.30;       // carrier objects labeled with the twin word

std::vector<double> unit_vector(Rng& rng, size_t dim) {
    std::vector<double> v(dim);
    double norm2 = 0.0;
    for (double& x : v) {
        x = rng.next_gaussian();
        norm2 += x * x;
    }
    double inv = 1.0 / std::sqrt(std::max(norm2, 1e-300));
    for (double& x : v) x *= inv;
    return v;
}

std::vector<double> scaled_sum(const std::vector<double>& base, double scale,
                               const std::vector<double>& dir) {
    std::vector<double> out(base.size());
    for (size_t i = 0; i < base.size(); ++i) out[i] = base[i] + scale * dir[i];
    return out;
}

// random direction orthogonal to `basis`, scaled to `norm`
std::vector<double> orthogonal_direction(Rng& rng, size_t dim,
                                         const std::vector<const std::vector<double>*>& basis,
                                         double norm) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.next_gaussian();
    for (const auto* b : basis) {
        double bb = 0.0, vb = 0.0;
        for (size_t i = 0; i < dim; ++i) {
            bb += (*b)[i] * (*b)[i];
            vb += v[i] * (*b)[i];
        }
        if (bb > 0.0) {
            double coef = vb / bb;
            for (size_t i = 0; i < dim; ++i) v[i] -= coef * (*b)[i];
        }
    }
    double norm2 = 0.0;
    for (double x : v) norm2 += x * x;
    double scale = norm / std::sqrt(std::max(norm2, 1e-300));
    for (double& x : v) x *= scale;
    return v;
}

Box jittered_box(const Box& gt, double scale, Rng& rng) {
    double dx = rng.uniform(-scale, scale) * gt.width();
    double dy = rng.uniform(-scale, scale) * gt.height();
    double sw = std::exp(rng.uniform(-0.5 * scale, 0.5 * scale));
    double sh = std::exp(rng.uniform(-0.5 * scale, 0.5 * scale));
    double cx = gt.center_x() + dx;
    double cy = gt.center_y() + dy;
    double w = gt.width() * sw;
    double h = gt.height() * sh;
    return Box{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

Box displaced_box(const Box& gt, Rng& rng) {
    double angle = rng.uniform(0.0, 6.283185307179586);
    double dist = rng.uniform(1.3, 2.2);
    double cx = gt.center_x() + std::cos(angle) * dist * gt.width();
    double cy = gt.center_y() + std::sin(angle) * dist * gt.height();
    double w = gt.width() * std::exp(rng.uniform(-0.1, 0.1));
    double h = gt.height() * std::exp(rng.uniform(-0.1, 0.1));
    return Box{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot open file for writing: " + path);
    out << content;
    if (!out) fail(ErrorCode::Io, "write failed: " + path);
}

std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

} // namespace

void SyntheticWorldSpec::validate() const {
    if (superclusters == 0 || categories_per_supercluster == 0) {
        fail(ErrorCode::InvalidArgument, "world needs at least one category");
    }
    if (images == 0 || regions_per_image == 0) {
        fail(ErrorCode::InvalidArgument, "world needs images and regions");
    }
    if (embed_dim < 2) fail(ErrorCode::InvalidArgument, "embed_dim must be >= 2");
    size_t directions = superclusters * (categories_per_supercluster + 1) + 5;
    if (feature_dim < directions + 1) {
        fail(ErrorCode::InvalidArgument,
             "feature_dim must exceed the world's direction count " + std::to_string(directions));
    }
    if (intra_supercluster_separation <= 0.0 || noise < 0.0 || proposal_jitter < 0.0) {
        fail(ErrorCode::InvalidArgument, "world scales must be positive (noise/jitter >= 0)");
    }
}

WorldInfo generate_world(const SyntheticWorldSpec& spec, const std::string& out_dir) {
    spec.validate();
    std::filesystem::create_directories(out_dir);
    WorldPaths paths{out_dir};

    const size_t S = spec.superclusters;
    const size_t C = spec.categories_per_supercluster;
    const size_t n_categories = S * C;
    const size_t F = spec.feature_dim;
    const size_t E = spec.embed_dim;

    Rng rng(spec.seed);
    WorldInfo info;

    // tokens
    std::vector<std::string> parents(S), twins(S);
    for (size_t s = 0; s < S; ++s) {
        parents[s] = "g" + std::to_string(s);
        twins[s] = "t" + std::to_string(s);
    }
    for (size_t s = 0; s < S; ++s) {
        for (size_t j = 0; j < C; ++j) {
            std::string cat = "c" + std::to_string(s) + "_" + std::to_string(j);
            info.categories.push_back(cat);
            info.supercluster_of[cat] = s;
            info.parent_of[cat] = parents[s];
        }
    }
    info.twins = twins;

    // word vectors: same-supercluster categories embed near each other
    std::vector<std::vector<double>> super_embed(S), cat_embed(n_categories);
    for (size_t s = 0; s < S; ++s) super_embed[s] = unit_vector(rng, E);
    for (size_t s = 0; s < S; ++s) {
        for (size_t j = 0; j < C; ++j) {
            cat_embed[s * C + j] = scaled_sum(super_embed[s], kEmbedOffset, unit_vector(rng, E));
        }
    }
    std::vector<std::vector<double>> twin_embed(S);
    for (size_t s = 0; s < S; ++s) {
        twin_embed[s] = scaled_sum(cat_embed[s * C], 0.10, unit_vector(rng, E));
    }
    std::vector<double> filler_embed = scaled_sum(std::vector<double>(E, 0.0), 0.05, unit_vector(rng, E));

    // Feature centers: supercluster directions are mutually orthogonal and
    // member offsets are orthogonal to every direction used so far, so the
    // noiseless world is exactly separable by inner product (a category's own
    // score beats a sibling's by separation^2) while the default noise level
    // drowns precisely that sibling margin and nothing else.
    std::vector<std::vector<double>> cat_center(n_categories);
    std::vector<std::vector<double>> basis_storage;
    basis_storage.reserve(S + n_categories + 5); // pointers into it must stay valid
    std::vector<const std::vector<double>*> basis;
    {
        std::vector<std::vector<double>> super_center(S);
        for (size_t s = 0; s < S; ++s) {
            super_center[s] = orthogonal_direction(rng, F, basis, kSuperclusterRadius);
            basis_storage.push_back(super_center[s]);
            basis.push_back(&basis_storage.back());
        }
        for (size_t s = 0; s < S; ++s) {
            for (size_t j = 0; j < C; ++j) {
                auto offset = orthogonal_direction(rng, F, basis, 1.0);
                cat_center[s * C + j] =
                    scaled_sum(super_center[s], spec.intra_supercluster_separation, offset);
                basis_storage.push_back(std::move(offset));
                basis.push_back(&basis_storage.back());
            }
        }
    }
    std::vector<double> bg_center = orthogonal_direction(rng, F, basis, kBackgroundRadius);
    basis_storage.push_back(bg_center);
    basis.push_back(&basis_storage.back());

    // box-offset signal directions, orthogonal to all content directions so
    // the regression targets are linearly readable without disturbing
    // category evidence
    std::vector<std::vector<double>> offset_dirs(4);
    for (size_t k = 0; k < 4; ++k) {
        offset_dirs[k] = orthogonal_direction(rng, F, basis, kJitterSignal);
        basis_storage.push_back(offset_dirs[k]);
        basis.push_back(&basis_storage.back());
    }

    auto region_feature = [&](size_t cat, const Box& proposal, const Box& gt, Rng& r) {
        double o = box_iou(proposal, gt);
        BoxDeltas t = regression_targets(proposal, gt);
        std::vector<float> f(F);
        for (size_t i = 0; i < F; ++i) {
            double x = o * cat_center[cat][i] + (1.0 - o) * bg_center[i];
            for (int k = 0; k < 4; ++k) x += offset_dirs[k][i] * t[k];
            x += spec.noise * r.next_gaussian();
            f[i] = static_cast<float>(x);
        }
        return f;
    };

    auto random_gt = [&](Rng& r) {
        double w = r.uniform(80.0, 240.0);
        double h = r.uniform(80.0, 240.0);
        double cx = r.uniform(250.0, 774.0);
        double cy = r.uniform(250.0, 774.0);
        return Box{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
    };

    // detection splits: jittered proposals around one annotated object
    auto gen_detection_split = [&](size_t n_images, uint64_t id_base, const std::string& feat_path,
                                   const std::string& annot_path) {
        FeatureSet features(F);
        std::vector<AnnotationRecord> annotations;
        const size_t R = spec.regions_per_image;
        for (size_t i = 0; i < n_images; ++i) {
            uint64_t image_id = id_base + i + 1;
            size_t cat = i % n_categories;
            info.image_category[image_id] = info.categories[cat];
            Box gt = random_gt(rng);
            // proposal 0 is a near miss, proposal 1 a loose one, the rest sit
            // off the object entirely
            for (size_t r = 0; r < R; ++r) {
                Box proposal;
                if (r == 0) {
                    proposal = jittered_box(gt, 0.5 * spec.proposal_jitter, rng);
                } else if (r == 1 && R >= 3) {
                    proposal = jittered_box(gt, spec.proposal_jitter, rng);
                } else {
                    proposal = displaced_box(gt, rng);
                }
                features.add(image_id, static_cast<uint32_t>(r), proposal,
                             region_feature(cat, proposal, gt, rng));
            }
            annotations.push_back(
                AnnotationRecord{image_id, "a " + info.categories[cat], gt});
        }
        write_feature_file(feat_path, features);
        save_annotations(annot_path, annotations);
    };

    // The validation split carries the hard-negative mining. The mined
    // candidate list is 500 deep, and rank weighting only concentrates on
    // confusable categories when the object pool dwarfs that depth (with a
    // small pool every category reaches the list and mass follows sheer
    // cardinality), so the split gets several objects per training image.
    const size_t n_train = spec.images;
    const size_t n_val = std::max<size_t>(spec.images * 8, n_categories);
    const size_t n_test = std::max<size_t>(spec.images / 2, n_categories);

    gen_detection_split(n_train, 0, paths.train_features(), paths.train_annotations());

    // validation split: clean objects (proposal == gt), label granularity
    // varies the way human annotations do — some objects carry the group
    // word, some carriers carry the twin word
    {
        FeatureSet features(F);
        std::vector<AnnotationRecord> annotations;
        for (size_t i = 0; i < n_val; ++i) {
            uint64_t image_id = 1000000 + i + 1;
            size_t cat = i % n_categories;
            size_t s = cat / C;
            size_t j = cat % C;
            info.image_category[image_id] = info.categories[cat];
            Box gt = random_gt(rng);
            features.add(image_id, 0, gt, region_feature(cat, gt, gt, rng));
            double u = rng.next_double();
            std::string label;
            if (u < kParentLabelRate) {
                label = parents[s];
            } else if (j == 0 && u < kParentLabelRate + kTwinLabelRate) {
                label = twins[s];
            } else {
                label = info.categories[cat];
            }
            annotations.push_back(AnnotationRecord{image_id, "a " + label, gt});
        }
        write_feature_file(paths.val_features(), features);
        save_annotations(paths.val_annotations(), annotations);
    }

    gen_detection_split(n_test, 2000000, paths.test_features(), paths.test_annotations());

    // word vectors
    {
        std::string text;
        size_t count = 1 + n_categories + S + S;
        text += std::to_string(count) + " " + std::to_string(E) + "\n";
        auto emit = [&](const std::string& token, const std::vector<double>& v) {
            text += token;
            for (double x : v) {
                text += ' ';
                text += fmt_double(x);
            }
            text += '\n';
        };
        emit("a", filler_embed);
        for (size_t c = 0; c < n_categories; ++c) emit(info.categories[c], cat_embed[c]);
        for (size_t s = 0; s < S; ++s) emit(parents[s], super_embed[s]);
        for (size_t s = 0; s < S; ++s) emit(twins[s], twin_embed[s]);
        write_text_file(paths.word_vectors(), text);
    }

    // taxonomy: every category under its group word; the twin stays outside
    // the hierarchy on purpose
    {
        std::string text;
        for (size_t c = 0; c < n_categories; ++c) {
            text += info.categories[c] + "\t" + parents[c / C] + "\n";
        }
        write_text_file(paths.taxonomy(), text);
    }

    // co-occurrence stats consistent with the labeling conventions above:
    // every object also counts for its group word, and twin-labeled objects
    // are carrier objects
    {
        std::map<std::string, uint64_t> totals;
        size_t total_images = n_train + n_val + n_test;
        for (size_t c = 0; c < n_categories; ++c) {
            uint64_t n = total_images / n_categories + (c < total_images % n_categories ? 1 : 0);
            totals[info.categories[c]] = n;
        }
        for (size_t s = 0; s < S; ++s) {
            uint64_t sum = 0;
            for (size_t j = 0; j < C; ++j) sum += totals[info.categories[s * C + j]];
            totals[parents[s]] = sum;
            uint64_t twin_n = std::max<uint64_t>(
                1, static_cast<uint64_t>(std::llround(kTwinLabelRate *
                                                      static_cast<double>(totals[info.categories[s * C]]))));
            totals[twins[s]] = twin_n;
        }
        std::string totals_text;
        for (const auto& [cat, n] : totals) {
            totals_text += cat + "\t" + std::to_string(n) + "\n";
        }
        write_text_file(paths.cooc_totals(), totals_text);

        std::string pairs_text;
        for (size_t c = 0; c < n_categories; ++c) {
            pairs_text += info.categories[c] + "\t" + parents[c / C] + "\t" +
                          std::to_string(totals[info.categories[c]]) + "\n";
        }
        for (size_t s = 0; s < S; ++s) {
            pairs_text += twins[s] + "\t" + info.categories[s * C] + "\t" +
                          std::to_string(totals[twins[s]]) + "\n";
            pairs_text += twins[s] + "\t" + parents[s] + "\t" + std::to_string(totals[twins[s]]) + "\n";
        }
        write_text_file(paths.cooc_pairs(), pairs_text);
    }

    // queries: every child category, phrased the way the annotations are
    {
        std::string text;
        for (const auto& cat : info.categories) text += "a " + cat + "\n";
        write_text_file(paths.queries(), text);
    }

    // world metadata for tooling and tests
    {
        json obj;
        obj["categories"] = info.categories;
        json sc = json::object();
        for (const auto& [cat, s] : info.supercluster_of) sc[cat] = s;
        obj["supercluster_of"] = std::move(sc);
        json po = json::object();
        for (const auto& [cat, p] : info.parent_of) po[cat] = p;
        obj["parent_of"] = std::move(po);
        obj["twins"] = info.twins;
        json ic = json::object();
        for (const auto& [id, cat] : info.image_category) ic[std::to_string(id)] = cat;
        obj["image_category"] = std::move(ic);
        obj["spec"] = {{"superclusters", S},
                       {"categories_per_supercluster", C},
                       {"images", spec.images},
                       {"regions_per_image", spec.regions_per_image},
                       {"feature_dim", F},
                       {"embed_dim", E},
                       {"intra_supercluster_separation", spec.intra_supercluster_separation},
                       {"noise", spec.noise},
                       {"proposal_jitter", spec.proposal_jitter},
                       {"seed", spec.seed}};
        write_text_file(paths.world(), obj.dump(2) + "\n");
    }

    return info;
}

WorldInfo load_world_info(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open world file: " + path);
    json obj;
    try {
        in >> obj;
    } catch (const json::exception& e) {
        fail(ErrorCode::Format, path + ": " + e.what());
    }
    WorldInfo info;
    try {
        info.categories = obj.at("categories").get<std::vector<std::string>>();
        for (const auto& [cat, s] : obj.at("supercluster_of").items()) {
            info.supercluster_of[cat] = s.get<size_t>();
        }
        for (const auto& [cat, p] : obj.at("parent_of").items()) {
            info.parent_of[cat] = p.get<std::string>();
        }
        info.twins = obj.at("twins").get<std::vector<std::string>>();
        for (const auto& [id, cat] : obj.at("image_category").items()) {
            info.image_category[std::stoull(id)] = cat.get<std::string>();
        }
    } catch (const json::exception& e) {
        fail(ErrorCode::Format, path + ": " + e.what());
    }
    return info;
}

} // namespace qar
