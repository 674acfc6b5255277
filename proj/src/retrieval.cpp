#include "qar/retrieval.hpp"

#include "qar/error.hpp"

namespace qar {

std::vector<QueryResult> retrieve(const IvfadcIndex* index, const FeatureSet* exact_features,
                                  const GeneratorParams& params, const WordVectorTable& table,
                                  const std::string& query, size_t topk, size_t nprobe) {
    if ((index == nullptr) == (exact_features == nullptr)) {
        fail(ErrorCode::InvalidArgument, "retrieve needs exactly one of index or raw features");
    }
    if (topk == 0) fail(ErrorCode::InvalidArgument, "topk must be >= 1");

    Phrase phrase = make_phrase(query);
    PhraseEmbedding v = embed_phrase(table, phrase);
    Detector det = generate_detector(params, v);

    std::vector<SearchHit> hits;
    if (index) {
        hits = search(*index, det.w_c, topk, nprobe);
    } else {
        hits = search_exact(*exact_features, det.w_c, topk);
    }

    std::vector<QueryResult> out;
    out.reserve(hits.size());
    for (const auto& hit : hits) {
        BoxDeltas deltas;
        if (index) {
            std::vector<double> feature = index->reconstruct(hit.list, hit.offset);
            deltas = predict_deltas(det, std::span<const double>(feature));
        } else {
            deltas = predict_deltas(det, exact_features->feature(hit.offset));
        }
        QueryResult r;
        r.image_id = hit.image_id;
        r.region_id = hit.region_id;
        r.score = hit.score;
        r.proposal_box = hit.box;
        r.regressed_box = apply_deltas(hit.box, deltas);
        out.push_back(r);
    }
    return out;
}

} // namespace qar
