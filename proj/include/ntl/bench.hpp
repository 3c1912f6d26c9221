#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ntl {

struct BenchSpec {
    int vocab_size = 32000;
    int number_tokens = 10;
    double number_proportion = 0.8;  // share of labeled positions with numeric labels
    int positions = 512;             // loss-only scenario batch positions
    int iterations = 100;
    int warmup = 5;
    // full-step scenario dimensions (default model config otherwise)
    int full_step_vocab = 2000;
    int full_step_batch = 8;
    int full_step_seq_len = 64;
    std::uint64_t seed = 0;

    void validate() const;
};

struct BenchRow {
    std::string scenario;  // "loss_only" | "full_step"
    std::string config;
    double mean_us = 0, std_us = 0, min_us = 0, median_us = 0;
    double overhead_vs_ce = 0;  // (t - t_ce) / t_ce within the scenario
};

struct BenchReport {
    std::vector<BenchRow> rows;

    std::string to_csv() const;
    void save_csv(const std::string& path) const;
};

/// Times value+gradient of each loss alone on random logits, and complete
/// training steps (forward, loss, backward, optimizer) per combined loss.
/// Warmup iterations are excluded; the clock is monotonic.
BenchReport run_bench(const BenchSpec& spec);

}  // namespace ntl
