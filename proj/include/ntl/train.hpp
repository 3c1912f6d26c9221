#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ntl/checkpoint.hpp"
#include "ntl/datagen.hpp"
#include "ntl/evalx.hpp"
#include "ntl/losses.hpp"
#include "ntl/model.hpp"
#include "ntl/vocab.hpp"

namespace ntl {

enum class LossKind {
    CE,
    CE_NTL_MSE,
    CE_NTL_MAE,
    CE_NTL_HUBER,
    CE_NTL_WAS,
    CE_NTL_WAS_CDF,
    CE_GCE,
    CE_GCE_NTL_WAS_CDF,
};

/// Parses strings like "ce", "ce+ntl-was", "ce+gce+ntl-was-cdf".
LossKind parse_loss_kind(const std::string& s);
std::string loss_kind_name(LossKind kind);

struct TrainConfig {
    LossKind loss = LossKind::CE;
    double lambda = 0.3;
    double sigma = 0.5;
    std::optional<double> squash;  // cost squash factor; absent -> euclidean
    int batch_size = 32;
    std::int64_t steps = 1000;
    double lr = 1e-4;
    double weight_decay = 0.01;
    std::uint64_t seed = 0;
    std::int64_t eval_cadence = 100;
    int eval_limit = 0;  // cap on eval samples per pass; 0 = all
    std::string out_dir;
    ModelConfig model;

    void validate(const NumberVocabulary& vocab) const;

    /// Flat `key = value` file; '#' starts a comment; unknown keys rejected.
    static TrainConfig load(const std::string& path);
    void save(const std::string& path) const;
};

struct TrainResult {
    Parameters<float> params;
    TrainLog log;
};

/// Runs the loop: sample batch, forward, loss, backward, AdamW. Loss is
/// applied only to positions predicting answer tokens (and <eos>). Evaluates
/// on eval_data at the cadence; writes log.csv, log_buckets.csv and
/// checkpoint.bin under out_dir when it is nonempty. A nonempty
/// resume_checkpoint continues an earlier run bitwise where it left off.
/// A non-finite loss aborts after writing a diagnostic record.
TrainResult run_training(const TrainConfig& config,
                         const std::vector<TaskSample>& train_data,
                         const std::vector<TaskSample>& eval_data,
                         const NumberVocabulary& vocab,
                         const std::string& resume_checkpoint = "");

}  // namespace ntl
