#include "ntl/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "ntl/cost.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace ntl {

LossKind parse_loss_kind(const std::string& s) {
    if (s == "ce") return LossKind::CE;
    if (s == "ce+ntl-mse") return LossKind::CE_NTL_MSE;
    if (s == "ce+ntl-mae") return LossKind::CE_NTL_MAE;
    if (s == "ce+ntl-huber") return LossKind::CE_NTL_HUBER;
    if (s == "ce+ntl-was") return LossKind::CE_NTL_WAS;
    if (s == "ce+ntl-was-cdf") return LossKind::CE_NTL_WAS_CDF;
    if (s == "ce+gce") return LossKind::CE_GCE;
    if (s == "ce+gce+ntl-was-cdf") return LossKind::CE_GCE_NTL_WAS_CDF;
    throw std::invalid_argument("unknown loss: " + s);
}

std::string loss_kind_name(LossKind kind) {
    switch (kind) {
        case LossKind::CE: return "ce";
        case LossKind::CE_NTL_MSE: return "ce+ntl-mse";
        case LossKind::CE_NTL_MAE: return "ce+ntl-mae";
        case LossKind::CE_NTL_HUBER: return "ce+ntl-huber";
        case LossKind::CE_NTL_WAS: return "ce+ntl-was";
        case LossKind::CE_NTL_WAS_CDF: return "ce+ntl-was-cdf";
        case LossKind::CE_GCE: return "ce+gce";
        case LossKind::CE_GCE_NTL_WAS_CDF: return "ce+gce+ntl-was-cdf";
    }
    throw std::logic_error("unreachable");
}

namespace {

bool uses_gce(LossKind k) {
    return k == LossKind::CE_GCE || k == LossKind::CE_GCE_NTL_WAS_CDF;
}

bool uses_cdf(LossKind k) {
    return k == LossKind::CE_NTL_WAS_CDF || k == LossKind::CE_GCE_NTL_WAS_CDF;
}

}  // namespace

void TrainConfig::validate(const NumberVocabulary& vocab) const {
    if (!(lambda >= 0)) throw std::invalid_argument("lambda must be >= 0");
    if (uses_gce(loss) && !(sigma > 0))
        throw std::invalid_argument("sigma must be > 0 when gce is enabled");
    if (uses_cdf(loss) && !vocab.sorted_equidistant())
        throw std::invalid_argument(
            "ntl-was-cdf requires a sorted equidistant number vocabulary");
    if (squash && !(*squash >= 1))
        throw std::invalid_argument("squash factor must be >= 1");
    if (batch_size < 1 || steps < 1 || eval_cadence < 1)
        throw std::invalid_argument("batch_size, steps and eval_cadence must be >= 1");
    if (!(lr > 0) || !(weight_decay >= 0))
        throw std::invalid_argument("lr must be > 0 and weight_decay >= 0");
    if (eval_limit < 0) throw std::invalid_argument("eval_limit must be >= 0");
    if (model.vocab_size != 0 && model.vocab_size != vocab.size())
        throw std::invalid_argument("model vocab_size disagrees with vocabulary");
    ModelConfig m = model;
    m.vocab_size = vocab.size();
    m.validate();
}

void TrainConfig::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    out << "loss = " << loss_kind_name(loss) << "\n"
        << "lambda = " << num(lambda) << "\n"
        << "sigma = " << num(sigma) << "\n";
    if (squash) out << "squash = " << num(*squash) << "\n";
    out << "batch_size = " << batch_size << "\n"
        << "steps = " << steps << "\n"
        << "lr = " << num(lr) << "\n"
        << "weight_decay = " << num(weight_decay) << "\n"
        << "seed = " << seed << "\n"
        << "eval_cadence = " << eval_cadence << "\n"
        << "eval_limit = " << eval_limit << "\n";
    if (!out_dir.empty()) out << "out_dir = " << out_dir << "\n";
    out << "context_length = " << model.context_length << "\n"
        << "d_model = " << model.d_model << "\n"
        << "n_heads = " << model.n_heads << "\n"
        << "n_layers = " << model.n_layers << "\n"
        << "d_ff = " << model.d_ff << "\n"
        << "model_seed = " << model.seed << "\n";
}

TrainConfig TrainConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    TrainConfig c;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r") != std::string::npos)
                throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                            ": expected `key = value`");
            continue;
        }
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            auto e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty() || val.empty())
            throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                        ": expected `key = value`");
        if (key == "loss") c.loss = parse_loss_kind(val);
        else if (key == "lambda") c.lambda = std::stod(val);
        else if (key == "sigma") c.sigma = std::stod(val);
        else if (key == "squash") c.squash = std::stod(val);
        else if (key == "batch_size") c.batch_size = std::stoi(val);
        else if (key == "steps") c.steps = std::stoll(val);
        else if (key == "lr") c.lr = std::stod(val);
        else if (key == "weight_decay") c.weight_decay = std::stod(val);
        else if (key == "seed") c.seed = std::stoull(val);
        else if (key == "eval_cadence") c.eval_cadence = std::stoll(val);
        else if (key == "eval_limit") c.eval_limit = std::stoi(val);
        else if (key == "out_dir") c.out_dir = val;
        else if (key == "context_length") c.model.context_length = std::stoi(val);
        else if (key == "d_model") c.model.d_model = std::stoi(val);
        else if (key == "n_heads") c.model.n_heads = std::stoi(val);
        else if (key == "n_layers") c.model.n_layers = std::stoi(val);
        else if (key == "d_ff") c.model.d_ff = std::stoi(val);
        else if (key == "model_seed") c.model.seed = std::stoull(val);
        else
            throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                        ": unknown key `" + key + "`");
    }
    return c;
}

namespace {

struct EncodedSample {
    std::vector<int> ids;
    int answer_start = 0;  // local index of the first answer token
};

EncodedSample encode_sample(const TaskSample& s, const NumberVocabulary& vocab, int eos) {
    EncodedSample e;
    TokenSequence q = vocab.encode_text(s.question);
    TokenSequence a = vocab.encode_text(s.answer);
    e.ids = q.ids;
    e.answer_start = static_cast<int>(e.ids.size());
    e.ids.insert(e.ids.end(), a.ids.begin(), a.ids.end());
    e.ids.push_back(eos);
    return e;
}

}  // namespace

TrainResult run_training(const TrainConfig& config,
                         const std::vector<TaskSample>& train_data,
                         const std::vector<TaskSample>& eval_data,
                         const NumberVocabulary& vocab,
                         const std::string& resume_checkpoint) {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();

#if defined(__GLIBC__)
    // The loop allocates and frees multi-megabyte activations every step;
    // without these hints glibc returns them to the kernel each time and the
    // resulting page faults roughly double the step time.
    static const bool malloc_tuned = [] {
        mallopt(M_MMAP_MAX, 0);
        mallopt(M_TRIM_THRESHOLD, 256 << 20);
        return true;
    }();
    (void)malloc_tuned;
#endif

    if (train_data.empty()) throw std::invalid_argument("training dataset is empty");
    config.validate(vocab);
    ModelConfig mc = config.model;
    mc.vocab_size = vocab.size();

    const int eos = vocab.id_of("<eos>");
    if (eos < 0) throw std::invalid_argument("vocabulary lacks <eos>");

    std::vector<EncodedSample> encoded;
    encoded.reserve(train_data.size());
    for (const auto& s : train_data) {
        encoded.push_back(encode_sample(s, vocab, eos));
        if (static_cast<int>(encoded.back().ids.size()) > mc.context_length)
            throw std::invalid_argument("sample exceeds model context: " + s.question);
    }

    // lambda == 0 degenerates to the run without the weighted term; resolving
    // that here keeps the log and trajectory identical to the plain run.
    LossKind kind = config.loss;
    if (config.lambda == 0) {
        if (kind == LossKind::CE_GCE_NTL_WAS_CDF) kind = LossKind::CE_GCE;
        else if (kind != LossKind::CE && kind != LossKind::CE_GCE) kind = LossKind::CE;
    }

    CostSpec cost;
    if (kind == LossKind::CE_NTL_WAS) {
        cost = config.squash ? build_cost_squashed(vocab, *config.squash)
                             : build_cost_euclidean(vocab);
    }

    Parameters<float> params;
    AdamState<float> adam;
    std::mt19937_64 rng;
    std::int64_t start_step = 0;
    if (resume_checkpoint.empty()) {
        params = init_params<float>(mc);
        adam = AdamState<float>::init(mc);
        rng.seed(config.seed);
    } else {
        Checkpoint ck = load_checkpoint(resume_checkpoint);
        if (!ck.train_state)
            throw std::invalid_argument("checkpoint has no training state to resume from");
        if (!(ck.config == mc))
            throw std::invalid_argument("checkpoint model config disagrees with train config");
        params = std::move(ck.params);
        adam = std::move(ck.train_state->adam);
        start_step = ck.train_state->step;
        std::istringstream ss(ck.train_state->rng_state);
        ss >> rng;
        if (ss.fail()) throw std::runtime_error("corrupt rng state in checkpoint");
        if (start_step >= config.steps)
            throw std::invalid_argument("checkpoint is already past the requested step count");
    }

    if (!config.out_dir.empty()) std::filesystem::create_directories(config.out_dir);

    const int n_num = vocab.number_count();
    std::uniform_int_distribution<std::size_t> pick(0, encoded.size() - 1);
    TrainResult result;
    TrainLog& log = result.log;
    double last_total = 0, last_ce = 0, last_ntl = 0;

    for (std::int64_t step = start_step + 1; step <= config.steps; ++step) {
        // batch assembly: ragged, answer-only loss positions
        TokenBatch batch;
        batch.offsets.push_back(0);
        LabelBatch labels;
        std::vector<std::size_t> chosen(config.batch_size);
        for (int b = 0; b < config.batch_size; ++b) {
            chosen[b] = pick(rng);
            const EncodedSample& e = encoded[chosen[b]];
            const int len = static_cast<int>(e.ids.size());
            batch.ids.insert(batch.ids.end(), e.ids.begin(), e.ids.end());
            batch.offsets.push_back(static_cast<int>(batch.ids.size()));
            for (int i = 0; i < len; ++i) {
                // loss only where the next token is part of the answer (or <eos>)
                const bool on = (i + 1 >= e.answer_start) && (i + 1 < len);
                labels.ids.push_back(on ? e.ids[i + 1] : 0);
                labels.pad_mask.push_back(on);
            }
        }

        ForwardCache<float> cache;
        Mat<float> logits = forward(params, mc, batch, cache);

        LossResult<float> ce = cross_entropy(logits, labels);
        LossResult<float> combined;
        double ntl_part = 0;
        switch (kind) {
            case LossKind::CE:
                combined = ce;
                break;
            case LossKind::CE_NTL_MSE:
            case LossKind::CE_NTL_MAE:
            case LossKind::CE_NTL_HUBER: {
                const LpVariant v = config.loss == LossKind::CE_NTL_MSE ? LpVariant::MSE
                                    : config.loss == LossKind::CE_NTL_MAE ? LpVariant::MAE
                                                                          : LpVariant::Huber;
                LossResult<float> ntl = ntl_lp(logits, labels, vocab, v);
                ntl_part = ntl.total;
                combined = combine(ce, ntl, static_cast<float>(config.lambda));
                break;
            }
            case LossKind::CE_NTL_WAS: {
                LossResult<float> ntl = ntl_was(logits, labels, vocab, cost);
                ntl_part = ntl.total;
                combined = combine(ce, ntl, static_cast<float>(config.lambda));
                break;
            }
            case LossKind::CE_NTL_WAS_CDF: {
                Mat<float> targets = Mat<float>::Zero(logits.rows(), n_num);
                const auto mask = vocab.number_mask(labels.ids, labels.pad_mask);
                for (std::size_t i = 0; i < mask.size(); ++i)
                    if (mask[i]) targets(static_cast<int>(i), vocab.slice_index(labels.ids[i])) = 1;
                LossResult<float> ntl = ntl_was_cdf(logits, targets, labels, vocab);
                ntl_part = ntl.total;
                combined = combine(ce, ntl, static_cast<float>(config.lambda));
                break;
            }
            case LossKind::CE_GCE: {
                Mat<float> targets =
                    gaussian_smooth_labels(labels, static_cast<float>(config.sigma), vocab);
                LossResult<float> g = gce(logits, targets, labels, vocab);
                ntl_part = g.total;
                combined = combine(ce, g, 1.0f);
                break;
            }
            case LossKind::CE_GCE_NTL_WAS_CDF: {
                Mat<float> targets =
                    gaussian_smooth_labels(labels, static_cast<float>(config.sigma), vocab);
                LossResult<float> g = gce(logits, targets, labels, vocab);
                LossResult<float> w = ntl_was_cdf(logits, targets, labels, vocab);
                ntl_part = g.total + config.lambda * w.total;
                combined = combine(combine(ce, g, 1.0f), w, static_cast<float>(config.lambda));
                break;
            }
        }

        if (!std::isfinite(combined.total)) {
            if (!config.out_dir.empty()) {
                std::ofstream diag(config.out_dir + "/nan_diagnostic.txt");
                diag << "non-finite loss at step " << step << "\n"
                     << "loss kind " << loss_kind_name(config.loss) << "\n"
                     << "batch sample indices:";
                for (auto i : chosen) diag << ' ' << i;
                diag << "\nquestions:\n";
                for (auto i : chosen) diag << "  " << train_data[i].question << "\n";
            }
            throw std::runtime_error("non-finite loss at step " + std::to_string(step));
        }

        Parameters<float> grads = backward(params, mc, cache, combined.grad_logits);
        adam_step(params, grads, adam, static_cast<float>(config.lr),
                  static_cast<float>(config.weight_decay));

        last_total = combined.total;
        last_ce = ce.total;
        last_ntl = ntl_part;

        if (step % config.eval_cadence == 0 || step == config.steps) {
            std::vector<TaskSample> ev = eval_data;
            if (config.eval_limit > 0 && static_cast<int>(ev.size()) > config.eval_limit)
                ev.resize(config.eval_limit);
            TrainLogRecord rec;
            rec.step = step;
            rec.loss_total = last_total;
            rec.loss_ce = last_ce;
            rec.loss_ntl = last_ntl;
            if (!ev.empty()) {
                MetricsReport rep = evaluate(params, mc, ev, vocab);
                rec.eval_accuracy = rep.exact_match_accuracy;
                rec.eval_mae = rep.mae.value_or(std::numeric_limits<double>::quiet_NaN());
                rec.eval_mape = rep.mape.value_or(std::numeric_limits<double>::quiet_NaN());
                rec.mape_by_bucket = rep.mape_by_bucket;
            }
            rec.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
            if (!log.records.empty() && log.records.back().step == rec.step) log.records.pop_back();
            log.records.push_back(rec);
        }
    }

    if (!config.out_dir.empty()) {
        log.save_csv(config.out_dir + "/log.csv");
        log.save_bucket_csv(config.out_dir + "/log_buckets.csv");
        TrainState state;
        state.adam = adam;
        state.step = config.steps;
        std::ostringstream ss;
        ss << rng;
        state.rng_state = ss.str();
        save_checkpoint(params, mc, config.out_dir + "/checkpoint.bin", &state);
    }

    result.params = std::move(params);
    return result;
}

}  // namespace ntl
