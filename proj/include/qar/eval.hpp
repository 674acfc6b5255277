#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qar/detector.hpp"
#include "qar/embedding.hpp"
#include "qar/io.hpp"
#include "qar/ivfadc.hpp"

namespace qar {

struct GroundTruthInstance {
    uint64_t image_id = 0;
    Box box;
};

struct RankedRegion {
    uint64_t image_id = 0;
    uint32_t region_id = 0;
    Box box;
};

// Greedy PASCAL-style matching in rank order: a region is a true positive
// when it overlaps an unmatched ground-truth box of the same image by at
// least `iou_threshold`; every ground truth matches at most once.
std::vector<bool> match_ranked(const std::vector<RankedRegion>& ranked,
                               const std::vector<GroundTruthInstance>& positives,
                               double iou_threshold);

// (sum of precision at true-positive ranks) / total positives.
double average_precision(const std::vector<RankedRegion>& ranked,
                         const std::vector<GroundTruthInstance>& positives,
                         double iou_threshold = 0.5);

double precision_at_k(const std::vector<RankedRegion>& ranked,
                      const std::vector<GroundTruthInstance>& positives, size_t k,
                      double iou_threshold = 0.5);

// Fraction of phrase instances whose top-1 box reaches the IoU threshold.
double localization_accuracy(const std::vector<Box>& predictions, const std::vector<Box>& gts,
                             double threshold);

// Mean of per-query APs, queries with zero positives excluded upstream.
double mean_average_precision(const std::vector<double>& per_query_ap);

// Drops entries whose (image_id, box) already appeared at a better rank.
std::vector<size_t> dedup_ranked_indices(const std::vector<RankedRegion>& ranked);

struct QueryMetrics {
    std::string query;
    size_t positives = 0;
    double ap = 0.0;
    double precision_at_10 = 0.0;
    double precision_at_100 = 0.0;
};

struct EvaluationReport {
    double iou_threshold = 0.5;
    double map = 0.0;
    size_t queries_evaluated = 0; // queries with at least one positive
    std::vector<QueryMetrics> queries;
    // threshold -> accuracy over all instances of evaluated queries
    std::map<double, double> localization_with_regression;
    std::map<double, double> localization_without_regression;
    size_t localization_instances = 0;
};

// Runs every query through the retrieval path (ADC search when `index` is
// given, exhaustive scan over `features` otherwise), computes AP/PR@k against
// the annotations, and measures per-phrase top-1 localization accuracy over
// the IoU grid {0.5 .. 0.9} with and without the generated regressor.
// Ground truth for a query is every annotation whose head noun matches the
// query's head noun (rightmost token).
EvaluationReport evaluate_retrieval(const GeneratorParams& params, const WordVectorTable& table,
                                    const std::vector<AnnotationRecord>& annotations,
                                    const std::vector<std::string>& queries, double iou_threshold,
                                    const IvfadcIndex* index, const FeatureSet* features,
                                    size_t nprobe);

void save_report_json(const std::string& path, const EvaluationReport& report);

} // namespace qar
