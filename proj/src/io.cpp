#include "qar/io.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include <json.hpp>

#include "qar/error.hpp"

namespace qar {

using nlohmann::json;

std::vector<AnnotationRecord> load_annotations(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open annotations file: " + path);
    std::vector<AnnotationRecord> records;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::exception& e) {
            fail(ErrorCode::Format, path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (!obj.contains("image_id") || !obj.contains("phrase") || !obj.contains("box")) {
            fail(ErrorCode::Format,
                 path + ":" + std::to_string(lineno) + ": missing image_id/phrase/box");
        }
        AnnotationRecord rec;
        try {
            rec.image_id = obj.at("image_id").get<uint64_t>();
            rec.phrase = obj.at("phrase").get<std::string>();
            auto box = obj.at("box");
            if (!box.is_array() || box.size() != 4) {
                fail(ErrorCode::Format,
                     path + ":" + std::to_string(lineno) + ": box must be [x1,y1,x2,y2]");
            }
            rec.box = Box{box[0].get<double>(), box[1].get<double>(), box[2].get<double>(),
                          box[3].get<double>()};
        } catch (const json::exception& e) {
            fail(ErrorCode::Format, path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (!rec.box.valid()) {
            fail(ErrorCode::Format, path + ":" + std::to_string(lineno) + ": invalid box");
        }
        records.push_back(std::move(rec));
    }
    return records;
}

void save_annotations(const std::string& path, const std::vector<AnnotationRecord>& records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot open annotations file for writing: " + path);
    for (const auto& rec : records) {
        json obj;
        obj["image_id"] = rec.image_id;
        obj["phrase"] = rec.phrase;
        obj["box"] = {rec.box.x1, rec.box.y1, rec.box.x2, rec.box.y2};
        out << obj.dump() << '\n';
    }
    if (!out) fail(ErrorCode::Io, "write failed: " + path);
}

std::vector<std::string> load_queries(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open queries file: " + path);
    std::vector<std::string> queries;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (!line.empty()) queries.push_back(line);
    }
    return queries;
}

std::vector<AnnotatedImage> build_annotated_images(const FeatureSet& features,
                                                   const std::vector<AnnotationRecord>& annotations,
                                                   const WordVectorTable* vocabulary,
                                                   DatasetStats* stats) {
    std::map<uint64_t, AnnotatedImage> images;
    for (size_t i = 0; i < features.size(); ++i) {
        auto& img = images[features.image_id(i)];
        img.image_id = features.image_id(i);
        img.regions.push_back(features.at(i));
    }

    DatasetStats local;
    for (const auto& rec : annotations) {
        auto it = images.find(rec.image_id);
        if (it == images.end()) {
            ++local.dropped_unmatched_annotations;
            continue;
        }
        Phrase phrase = make_phrase(rec.phrase);
        if (phrase.tokens.empty()) {
            ++local.dropped_oov_phrases;
            continue;
        }
        if (vocabulary) {
            bool embeddable = std::any_of(phrase.tokens.begin(), phrase.tokens.end(),
                                          [&](const std::string& t) { return vocabulary->contains(t); });
            if (!embeddable) {
                ++local.dropped_oov_phrases;
                continue;
            }
        }
        it->second.phrases.emplace_back(std::move(phrase), rec.box);
        ++local.annotations;
    }

    std::vector<AnnotatedImage> out;
    out.reserve(images.size());
    for (auto& [id, img] : images) {
        if (img.phrases.empty()) continue;
        out.push_back(std::move(img));
    }
    local.images = out.size();
    if (stats) *stats = local;
    return out;
}

} // namespace qar
