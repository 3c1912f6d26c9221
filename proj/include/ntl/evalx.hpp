#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ntl/datagen.hpp"
#include "ntl/model.hpp"
#include "ntl/vocab.hpp"

namespace ntl {

struct MetricsReport {
    double exact_match_accuracy = 0.0;
    std::optional<double> mae;
    std::optional<double> r2;
    std::optional<double> mape;
    std::optional<double> pearson;
    std::optional<double> spearman;
    double parse_failure_rate = 0.0;
    int n = 0;
    bool log_transform_applied = false;
    std::map<int, double> mape_by_bucket;  // max operand digits -> MAPE

    /// Single-line CSV plus fixed header; buckets excluded.
    static std::string csv_header();
    std::string to_csv() const;
    std::string to_text() const;
};

struct EvalOptions {
    bool log_transform = true;
    int max_new_tokens = 16;
};

/// Signed log transform used before MAE/R^2: s(x) = sign(x) * log10(1 + |x|).
double signed_log10(double x);

/// Strips leading zeros and normalizes "-0" to "0" so exact match is
/// independent of formatting.
std::string canonicalize_answer(const std::string& s);

/// Greedy-decodes every sample's answer and aggregates the metric suite.
/// Unparseable generations count against accuracy, are excluded from
/// value-based metrics and are reported via parse_failure_rate.
MetricsReport evaluate(const Parameters<float>& params, const ModelConfig& config,
                       const std::vector<TaskSample>& samples, const NumberVocabulary& vocab,
                       const EvalOptions& options = {});

/// One per-eval-step record of a training run.
struct TrainLogRecord {
    std::int64_t step = 0;
    double loss_total = 0, loss_ce = 0, loss_ntl = 0;
    double eval_accuracy = 0, eval_mae = 0, eval_mape = 0;
    double wall_ms = 0;
    std::map<int, double> mape_by_bucket;
};

struct TrainLog {
    std::vector<TrainLogRecord> records;

    void save_csv(const std::string& path) const;
    void save_bucket_csv(const std::string& path) const;
    static TrainLog load_csv(const std::string& path, const std::string& bucket_path = "");
};

/// First step at which each run's eval MAPE drops below the threshold, per
/// difficulty bucket. nullopt when a run never crosses.
struct CrossingRecord {
    int bucket = 0;
    std::optional<std::int64_t> first_step_a;
    std::optional<std::int64_t> first_step_b;
};

std::vector<CrossingRecord> compare_runs(const TrainLog& log_a, const TrainLog& log_b,
                                         double threshold = 0.5);

}  // namespace ntl
