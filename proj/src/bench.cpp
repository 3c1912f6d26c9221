#include "ntl/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <malloc.h>
#include <limits>
#include <memory>
#include <random>
#include <stdexcept>

#include "ntl/cost.hpp"
#include "ntl/losses.hpp"
#include "ntl/model.hpp"
#include "ntl/vocab.hpp"

namespace ntl {

void BenchSpec::validate() const {
    if (vocab_size < number_tokens + 1 || number_tokens < 2)
        throw std::invalid_argument("vocab must hold the number tokens plus text tokens");
    if (number_proportion < 0 || number_proportion > 1)
        throw std::invalid_argument("number_proportion must lie in [0,1]");
    if (iterations < 10) throw std::invalid_argument("iterations must be >= 10");
    if (positions < 1 || warmup < 0 || full_step_vocab < number_tokens + 1 ||
        full_step_batch < 1 || full_step_seq_len < 2)
        throw std::invalid_argument("invalid benchmark dimensions");
}

namespace {

NumberVocabulary make_vocab(int vocab_size, int number_tokens) {
    std::vector<std::pair<std::string, std::optional<double>>> entries;
    entries.reserve(vocab_size);
    for (int j = 0; j < number_tokens; ++j)
        entries.emplace_back("n" + std::to_string(j), static_cast<double>(j));
    for (int j = number_tokens; j < vocab_size; ++j)
        entries.emplace_back("t" + std::to_string(j), std::nullopt);
    return NumberVocabulary::from_entries(entries);
}

LabelBatch make_labels(int positions, const NumberVocabulary& vocab, double proportion,
                       std::mt19937_64& rng) {
    LabelBatch labels;
    labels.ids.resize(positions);
    labels.pad_mask.assign(positions, true);
    std::vector<int> order(positions);
    for (int i = 0; i < positions; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    const int n_numeric = static_cast<int>(std::lround(proportion * positions));
    std::uniform_int_distribution<int> num(0, vocab.number_count() - 1);
    std::uniform_int_distribution<int> txt(vocab.number_count(), vocab.size() - 1);
    for (int i = 0; i < positions; ++i)
        labels.ids[order[i]] =
            i < n_numeric ? vocab.number_indices()[num(rng)] : txt(rng);
    return labels;
}

struct Stats {
    double mean_us, std_us, min_us, median_us;
};

Stats summarize(std::vector<double> us) {
    const std::size_t n = us.size();
    Stats s{};
    for (double v : us) s.mean_us += v;
    s.mean_us /= n;
    for (double v : us) s.std_us += (v - s.mean_us) * (v - s.mean_us);
    s.std_us = std::sqrt(s.std_us / n);
    std::sort(us.begin(), us.end());
    s.min_us = us.front();
    s.median_us = n % 2 ? us[n / 2] : 0.5 * (us[n / 2 - 1] + us[n / 2]);
    return s;
}

/// Times a set of bodies round-robin: iteration i of every body runs before
/// iteration i+1 of any. External load (scheduler noise, CPU steal) then hits
/// all configurations evenly instead of whichever happened to be running.
///
/// Fast bodies are batched: each timed sample runs the body enough times to
/// fill a comparable wall-clock window and records the per-call time. A
/// sub-100us body sampled alone is at the mercy of millisecond scheduler
/// hiccups landing in some configurations and not others; over a wider
/// window the same hiccups dilute into an even slowdown that preserves the
/// relative ordering.
struct Interleaved {
    struct Body {
        std::string name;
        std::function<void()> fn;
        int reps = 1;
    };
    std::vector<Body> bodies;

    void add(std::string name, std::function<void()> body) {
        bodies.push_back({std::move(name), std::move(body), 1});
    }

    std::vector<std::pair<std::string, Stats>> run(int iterations, int warmup) {
        using clock = std::chrono::steady_clock;
        constexpr double target_window_us = 10000.0;
        for (auto& b : bodies) {
            // One cold call, then the minimum of a few timed calls: the first
            // timed call would otherwise inherit whatever the previous body
            // left in the caches and understate this body's repeat count.
            b.fn();
            double once = std::numeric_limits<double>::infinity();
            for (int i = 0; i < 3; ++i) {
                const auto t0 = clock::now();
                b.fn();
                once = std::min(
                    once, std::chrono::duration<double, std::micro>(clock::now() - t0).count());
            }
            b.reps = static_cast<int>(
                std::clamp(target_window_us / std::max(once, 1.0), 1.0, 1000.0));
        }
        for (int i = 0; i < warmup; ++i)
            for (const auto& b : bodies) b.fn();
        std::vector<std::vector<double>> us(bodies.size());
        for (auto& v : us) v.reserve(iterations);
        // Shuffle the order each round: a heavy body evicts the shared
        // caches, so a fixed order would bill that penalty to whichever
        // config always ran next, and a deterministic rotation can still
        // phase-lock with periodic external load.
        const std::size_t nb = bodies.size();
        std::vector<std::size_t> order(nb);
        for (std::size_t k = 0; k < nb; ++k) order[k] = k;
        std::mt19937_64 order_rng(0xb17c0de);
        for (int i = 0; i < iterations; ++i) {
            std::shuffle(order.begin(), order.end(), order_rng);
            for (std::size_t k = 0; k < nb; ++k) {
                const std::size_t b = order[k];
                const auto t0 = clock::now();
                for (int r = 0; r < bodies[b].reps; ++r) bodies[b].fn();
                us[b].push_back(
                    std::chrono::duration<double, std::micro>(clock::now() - t0).count() /
                    bodies[b].reps);
            }
        }
        std::vector<std::pair<std::string, Stats>> out;
        for (std::size_t b = 0; b < bodies.size(); ++b)
            out.emplace_back(bodies[b].name, summarize(std::move(us[b])));
        return out;
    }
};

}  // namespace

BenchReport run_bench(const BenchSpec& spec) {
    spec.validate();
#if defined(__GLIBC__)
    // Same allocator hints as the training loop: the timed bodies allocate
    // and free multi-megabyte gradient buffers every call, and glibc's
    // default policy of returning them to the kernel adds tens of
    // milliseconds of page faults per iteration.
    static const bool malloc_tuned = [] {
        mallopt(M_MMAP_MAX, 0);
        mallopt(M_TRIM_THRESHOLD, 256 << 20);
        return true;
    }();
    (void)malloc_tuned;
#endif
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    BenchReport report;

    auto push_scenario = [&](const std::string& scenario, const std::string& config,
                             const Stats& s) {
        report.rows.push_back({scenario, config, s.mean_us, s.std_us, s.min_us, s.median_us, 0});
    };

    // --- loss-only scenario ---
    {
        const NumberVocabulary vocab = make_vocab(spec.vocab_size, spec.number_tokens);
        const CostSpec cost = build_cost_euclidean(vocab);
        Mat<float> logits(spec.positions, spec.vocab_size);
        for (int i = 0; i < logits.rows(); ++i)
            for (int j = 0; j < logits.cols(); ++j) logits(i, j) = static_cast<float>(normal(rng));
        const LabelBatch labels =
            make_labels(spec.positions, vocab, spec.number_proportion, rng);

        static volatile float sink = 0;  // keep the loss values observable
        Interleaved grid;
        grid.add("ce", [&] { sink = cross_entropy(logits, labels).total; });
        grid.add("ntl-mse", [&] { sink = ntl_lp(logits, labels, vocab, LpVariant::MSE).total; });
        grid.add("ntl-was", [&] { sink = ntl_was(logits, labels, vocab, cost).total; });
        grid.add("ntl-was-cdf", [&] {
            Mat<float> targets = Mat<float>::Zero(logits.rows(), vocab.number_count());
            const auto mask = vocab.number_mask(labels.ids, labels.pad_mask);
            for (std::size_t i = 0; i < mask.size(); ++i)
                if (mask[i])
                    targets(static_cast<int>(i), vocab.slice_index(labels.ids[i])) = 1;
            sink = ntl_was_cdf(logits, targets, labels, vocab).total;
        });
        for (const auto& [name, stats] : grid.run(spec.iterations, spec.warmup))
            push_scenario("loss_only", name, stats);
    }

    // --- full-step scenario ---
    {
        const NumberVocabulary vocab = make_vocab(spec.full_step_vocab, spec.number_tokens);
        const CostSpec cost = build_cost_euclidean(vocab);
        ModelConfig mc;
        mc.vocab_size = vocab.size();
        mc.seed = spec.seed;
        mc.validate();

        const int P = spec.full_step_batch * spec.full_step_seq_len;
        TokenBatch batch;
        std::uniform_int_distribution<int> any(0, vocab.size() - 1);
        batch.offsets.push_back(0);
        for (int b = 0; b < spec.full_step_batch; ++b) {
            for (int i = 0; i < spec.full_step_seq_len; ++i) batch.ids.push_back(any(rng));
            batch.offsets.push_back(static_cast<int>(batch.ids.size()));
        }
        const LabelBatch labels = make_labels(P, vocab, spec.number_proportion, rng);
        Mat<float> cdf_targets = Mat<float>::Zero(P, vocab.number_count());
        {
            const auto mask = vocab.number_mask(labels.ids, labels.pad_mask);
            for (std::size_t i = 0; i < mask.size(); ++i)
                if (mask[i])
                    cdf_targets(static_cast<int>(i), vocab.slice_index(labels.ids[i])) = 1;
        }

        enum class Extra { None, Mse, Was, WasCdf };
        struct RunState {
            Parameters<float> params;
            AdamState<float> adam;
            ForwardCache<float> cache;
        };
        std::vector<std::shared_ptr<RunState>> states;
        Interleaved grid;
        auto full_step = [&](const std::string& config, Extra extra) {
            auto st = std::make_shared<RunState>();
            st->params = init_params<float>(mc);
            st->adam = AdamState<float>::init(mc);
            states.push_back(st);
            grid.add(config, [&, st, extra] {
                Mat<float> logits = forward(st->params, mc, batch, st->cache);
                LossResult<float> ce = cross_entropy(logits, labels);
                LossResult<float> total;
                switch (extra) {
                    case Extra::None: total = ce; break;
                    case Extra::Mse:
                        total = combine(ce, ntl_lp(logits, labels, vocab, LpVariant::MSE), 0.3f);
                        break;
                    case Extra::Was:
                        total = combine(ce, ntl_was(logits, labels, vocab, cost), 0.3f);
                        break;
                    case Extra::WasCdf:
                        total = combine(ce, ntl_was_cdf(logits, cdf_targets, labels, vocab), 0.3f);
                        break;
                }
                Parameters<float> grads = backward(st->params, mc, st->cache, total.grad_logits);
                adam_step(st->params, grads, st->adam, 1e-4f, 0.01f);
            });
        };
        full_step("ce", Extra::None);
        full_step("ce+ntl-mse", Extra::Mse);
        full_step("ce+ntl-was", Extra::Was);
        full_step("ce+ntl-was-cdf", Extra::WasCdf);
        for (const auto& [name, stats] : grid.run(spec.iterations, spec.warmup))
            push_scenario("full_step", name, stats);
    }

    for (auto& row : report.rows) {
        for (const auto& base : report.rows)
            if (base.scenario == row.scenario && base.config == "ce") {
                row.overhead_vs_ce = (row.mean_us - base.mean_us) / base.mean_us;
                break;
            }
    }
    return report;
}

std::string BenchReport::to_csv() const {
    std::string out = "scenario,config,mean_us,std_us,min_us,median_us,overhead_vs_ce\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%.6g,%.6g,%.6g,%.6g,%.6g\n", r.scenario.c_str(),
                      r.config.c_str(), r.mean_us, r.std_us, r.min_us, r.median_us,
                      r.overhead_vs_ce);
        out += buf;
    }
    return out;
}

void BenchReport::save_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << to_csv();
}

}  // namespace ntl
