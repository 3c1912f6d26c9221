// ntlcli: dataset generation, training, evaluation, benchmarking, figure-data
// emission and numeric self-checks for the number-token loss library.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ntl/bench.hpp"
#include "ntl/cost.hpp"
#include "ntl/datagen.hpp"
#include "ntl/evalx.hpp"
#include "ntl/gradcheck.hpp"
#include "ntl/landscape.hpp"
#include "ntl/losses.hpp"
#include "ntl/ot_oracle.hpp"
#include "ntl/train.hpp"
#include "ntl/vocab.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitSelfcheck = 4;
constexpr int kArtifactVersion = 1;

std::string out_root() {
    if (const char* env = std::getenv("NTL_OUT")) return env;
    return "out";
}

/// Manifest-based idempotency: returns true when an identical manifest is
/// already on disk and the run may be skipped.
bool manifest_up_to_date(const fs::path& dir, const json& manifest, bool force) {
    if (force) return false;
    std::ifstream in(dir / "manifest.json");
    if (!in) return false;
    json existing;
    try {
        in >> existing;
    } catch (const json::exception&) {
        return false;
    }
    return existing == manifest;
}

void write_manifest(const fs::path& dir, const json& manifest) {
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2) << '\n';
}

struct RangeFlag {
    int lo = 1, hi = 2;
};

RangeFlag parse_range(const std::string& s) {
    const auto dots = s.find("..");
    if (dots == std::string::npos)
        throw CLI::ValidationError("range", "expected `lo..hi`, got `" + s + "`");
    RangeFlag r;
    r.lo = std::stoi(s.substr(0, dots));
    r.hi = std::stoi(s.substr(dots + 2));
    return r;
}

// ---------------------------------------------------------------------------

int cmd_datagen(const std::string& task, const std::string& range, int extra_digits, int n,
                int n_interp, int n_extra, std::uint64_t seed, std::string out, bool force) {
    ntl::GenSpec spec;
    if (task == "mul") spec.task = ntl::TaskKind::Multiplication;
    else if (task == "addsub") spec.task = ntl::TaskKind::AddSub;
    else throw std::invalid_argument("unknown task: " + task);
    const RangeFlag r = parse_range(range);
    spec.train_digits_min = r.lo;
    spec.train_digits_max = r.hi;
    spec.extrapolation_digits = extra_digits;
    spec.n_train = n;
    spec.n_interpolation = n_interp > 0 ? n_interp : std::max(1, n / 10);
    spec.n_extrapolation = n_extra > 0 ? n_extra : std::max(1, n / 10);
    spec.seed = seed;
    spec.validate();

    if (out.empty()) out = out_root() + "/datagen";
    fs::create_directories(out);
    const json manifest = {{"command", "datagen"},
                           {"artifact_version", kArtifactVersion},
                           {"seed", seed},
                           {"config",
                            {{"task", task},
                             {"train_digits", range},
                             {"extrapolation_digits", extra_digits},
                             {"n_train", spec.n_train},
                             {"n_interpolation", spec.n_interpolation},
                             {"n_extrapolation", spec.n_extrapolation}}}};
    if (manifest_up_to_date(out, manifest, force)) {
        std::cout << "up to date: " << out << '\n';
        return kExitOk;
    }

    const auto samples = ntl::generate(spec);
    ntl::save_samples(ntl::filter_split(samples, ntl::Split::Train), out + "/train.tsv");
    ntl::save_samples(ntl::filter_split(samples, ntl::Split::Interpolation),
                      out + "/interpolation.tsv");
    ntl::save_samples(ntl::filter_split(samples, ntl::Split::Extrapolation),
                      out + "/extrapolation.tsv");
    write_manifest(out, manifest);
    std::cout << "wrote " << samples.size() << " samples under " << out << '\n';
    return kExitOk;
}

int cmd_train(ntl::TrainConfig cfg, const std::string& data_path, const std::string& eval_path,
              const std::string& resume, bool force) {
    const ntl::NumberVocabulary vocab = ntl::NumberVocabulary::arithmetic_default();
    cfg.validate(vocab);
    if (cfg.out_dir.empty()) cfg.out_dir = out_root() + "/train";
    fs::create_directories(cfg.out_dir);

    json manifest = {{"command", "train"},
                     {"artifact_version", kArtifactVersion},
                     {"seed", cfg.seed},
                     {"config",
                      {{"loss", ntl::loss_kind_name(cfg.loss)},
                       {"lambda", cfg.lambda},
                       {"sigma", cfg.sigma},
                       {"batch_size", cfg.batch_size},
                       {"steps", cfg.steps},
                       {"lr", cfg.lr},
                       {"weight_decay", cfg.weight_decay},
                       {"eval_cadence", cfg.eval_cadence},
                       {"eval_limit", cfg.eval_limit},
                       {"data", data_path},
                       {"eval_data", eval_path},
                       {"resume", resume},
                       {"context_length", cfg.model.context_length},
                       {"d_model", cfg.model.d_model},
                       {"n_heads", cfg.model.n_heads},
                       {"n_layers", cfg.model.n_layers},
                       {"d_ff", cfg.model.d_ff},
                       {"model_seed", cfg.model.seed}}}};
    if (cfg.squash) manifest["config"]["squash"] = *cfg.squash;
    if (manifest_up_to_date(cfg.out_dir, manifest, force)) {
        std::cout << "up to date: " << cfg.out_dir << '\n';
        return kExitOk;
    }

    const auto train_data = ntl::load_samples(data_path, ntl::Split::Train);
    std::vector<ntl::TaskSample> eval_data;
    if (!eval_path.empty())
        eval_data = ntl::load_samples(eval_path, ntl::Split::Interpolation);
    ntl::TrainResult result = ntl::run_training(cfg, train_data, eval_data, vocab, resume);
    write_manifest(cfg.out_dir, manifest);
    if (!result.log.records.empty()) {
        const auto& last = result.log.records.back();
        std::cout << "final step " << last.step << " loss " << last.loss_total << " accuracy "
                  << last.eval_accuracy << '\n';
    }
    std::cout << "artifacts under " << cfg.out_dir << '\n';
    return kExitOk;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path,
             const std::string& split, int limit, std::string out, bool force) {
    ntl::Split sp;
    if (split == "train") sp = ntl::Split::Train;
    else if (split == "interpolation") sp = ntl::Split::Interpolation;
    else if (split == "extrapolation") sp = ntl::Split::Extrapolation;
    else throw std::invalid_argument("unknown split: " + split);

    if (out.empty()) out = out_root() + "/eval";
    fs::create_directories(out);
    const json manifest = {{"command", "eval"},
                           {"artifact_version", kArtifactVersion},
                           {"seed", 0},
                           {"config",
                            {{"checkpoint", ckpt_path},
                             {"data", data_path},
                             {"split", split},
                             {"limit", limit}}}};
    if (manifest_up_to_date(out, manifest, force)) {
        std::cout << "up to date: " << out << '\n';
        return kExitOk;
    }

    const ntl::NumberVocabulary vocab = ntl::NumberVocabulary::arithmetic_default();
    ntl::Checkpoint ck = ntl::load_checkpoint(ckpt_path);
    if (ck.config.vocab_size != vocab.size())
        throw std::invalid_argument("checkpoint vocabulary size disagrees with vocabulary");
    auto samples = ntl::load_samples(data_path, sp);
    if (limit > 0 && static_cast<int>(samples.size()) > limit) samples.resize(limit);
    const ntl::MetricsReport rep = ntl::evaluate(ck.params, ck.config, samples, vocab);

    std::ofstream csv(out + "/metrics.csv");
    csv << ntl::MetricsReport::csv_header() << '\n' << rep.to_csv() << '\n';
    write_manifest(out, manifest);
    std::cout << rep.to_text() << '\n';
    return kExitOk;
}

int cmd_bench(ntl::BenchSpec spec, std::string out, bool force) {
    if (out.empty()) out = out_root() + "/bench";
    fs::create_directories(out);
    const json manifest = {{"command", "bench"},
                           {"artifact_version", kArtifactVersion},
                           {"seed", spec.seed},
                           {"config",
                            {{"vocab_size", spec.vocab_size},
                             {"number_tokens", spec.number_tokens},
                             {"number_proportion", spec.number_proportion},
                             {"positions", spec.positions},
                             {"iterations", spec.iterations},
                             {"warmup", spec.warmup},
                             {"full_step_vocab", spec.full_step_vocab},
                             {"full_step_batch", spec.full_step_batch},
                             {"full_step_seq_len", spec.full_step_seq_len}}}};
    if (manifest_up_to_date(out, manifest, force)) {
        std::cout << "up to date: " << out << '\n';
        return kExitOk;
    }
    const ntl::BenchReport report = ntl::run_bench(spec);
    report.save_csv(out + "/bench.csv");
    write_manifest(out, manifest);
    std::cout << report.to_csv();
    return kExitOk;
}

int cmd_landscape(const std::string& figure, int resolution, std::string out, bool force) {
    if (figure != "1b" && figure != "2")
        throw std::invalid_argument("unknown figure id: " + figure);
    if (out.empty()) out = out_root() + "/landscape";
    fs::create_directories(out);
    const json manifest = {{"command", "landscape"},
                           {"artifact_version", kArtifactVersion},
                           {"seed", 0},
                           {"config", {{"figure", figure}, {"resolution", resolution}}}};
    if (manifest_up_to_date(out + "/" + figure, manifest, force)) {
        std::cout << "up to date: " << out << '\n';
        return kExitOk;
    }
    fs::create_directories(out + "/" + figure);
    if (figure == "1b") {
        ntl::write_distance_figure_csv(out + "/" + figure + "/fig1b.csv");
    } else {
        ntl::write_simplex_figure_csv(out + "/" + figure + "/fig2.csv", resolution);
        for (const char* loss : {"ce", "ntl-mse", "ntl-was"})
            ntl::write_simplex_figure_svg(
                out + "/" + figure + "/fig2_" + std::string(loss) + ".svg", loss, resolution);
    }
    write_manifest(out + "/" + figure, manifest);
    std::cout << "figure " << figure << " data under " << out << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------
// selfcheck

struct CheckOutcome {
    std::string name;
    bool pass;
    std::string detail;
};

int cmd_selfcheck(std::uint64_t seed, int cases, bool inject_bug) {
    std::vector<CheckOutcome> outcomes;
    const ntl::NumberVocabulary vocab = ntl::gradcheck_vocab();
    const ntl::CostSpec euclid = ntl::build_cost_euclidean(vocab);
    const ntl::CostSpec squashed = ntl::build_cost_squashed(vocab, 3.0);
    const double tol = 1e-6, h = 1e-6;

    auto grad_suite = [&](const std::string& name, auto loss_fn) {
        std::mt19937_64 rng(seed);
        double worst = 0;
        for (int c = 0; c < cases; ++c) {
            ntl::GradCase gc = ntl::make_grad_case(rng, vocab);
            auto fn = [&](const ntl::Mat<double>& z) { return loss_fn(z, gc.labels); };
            worst = std::max(worst, ntl::max_grad_rel_error(fn, gc.logits, h));
        }
        outcomes.push_back({"grad " + name, worst < tol,
                            "max relative error " + std::to_string(worst)});
    };

    using D = ntl::SoftmaxDomain;
    for (D dom : {D::Slice, D::Full}) {
        const std::string tag = dom == D::Slice ? " (slice)" : " (full)";
        grad_suite("ntl-mse" + tag, [&, dom](const auto& z, const auto& l) {
            auto r = ntl::ntl_lp(z, l, vocab, ntl::LpVariant::MSE, 1.0, dom);
            if (inject_bug && dom == D::Slice) r.grad_logits(0, 0) += 1e-3;
            return r;
        });
        grad_suite("ntl-mae" + tag, [&, dom](const auto& z, const auto& l) {
            return ntl::ntl_lp(z, l, vocab, ntl::LpVariant::MAE, 1.0, dom);
        });
        grad_suite("ntl-huber" + tag, [&, dom](const auto& z, const auto& l) {
            return ntl::ntl_lp(z, l, vocab, ntl::LpVariant::Huber, 1.0, dom);
        });
        grad_suite("ntl-was" + tag, [&, dom](const auto& z, const auto& l) {
            return ntl::ntl_was(z, l, vocab, euclid, dom);
        });
        grad_suite("ntl-was squashed" + tag, [&, dom](const auto& z, const auto& l) {
            return ntl::ntl_was(z, l, vocab, squashed, dom);
        });
        grad_suite("ntl-was-cdf" + tag, [&, dom](const auto& z, const auto& l) {
            const ntl::Mat<double> t = ntl::gaussian_smooth_labels<double>(l, 0.7, vocab);
            return ntl::ntl_was_cdf(z, t, l, vocab, dom);
        });
        grad_suite("gce" + tag, [&, dom](const auto& z, const auto& l) {
            const ntl::Mat<double> t = ntl::gaussian_smooth_labels<double>(l, 0.5, vocab);
            return ntl::gce(z, t, l, vocab, dom);
        });
    }
    grad_suite("ce", [&](const auto& z, const auto& l) { return ntl::cross_entropy(z, l); });

    // expected-transport-cost form vs the exact optimal-transport optimum
    {
        std::mt19937_64 rng(seed + 1);
        double worst = 0;
        for (int c = 0; c < cases; ++c) {
            ntl::GradCase gc = ntl::make_grad_case(rng, vocab);
            const ntl::Mat<double> q = ntl::number_softmax(gc.logits, vocab);
            const auto mask = vocab.number_mask(gc.labels.ids, gc.labels.pad_mask);
            const auto r = ntl::ntl_was(gc.logits, gc.labels, vocab, euclid);
            Eigen::VectorXd values =
                Eigen::Map<const Eigen::VectorXd>(vocab.number_values().data(),
                                                  vocab.number_count());
            for (int i = 0; i < gc.logits.rows(); ++i) {
                if (!mask[i]) continue;
                Eigen::VectorXd onehot = Eigen::VectorXd::Zero(vocab.number_count());
                onehot[vocab.slice_index(gc.labels.ids[i])] = 1.0;
                const double w = ntl::wasserstein_oracle(onehot, q.row(i).transpose(), values,
                                                         euclid);
                worst = std::max(worst, std::abs(w - r.per_position[i]));
            }
        }
        outcomes.push_back({"ntl-was matches exact transport optimum", worst < 1e-9,
                            "max deviation " + std::to_string(worst)});
    }

    // CDF form vs expected-cost form on one-hot targets
    {
        std::mt19937_64 rng(seed + 2);
        double worst = 0;
        for (int c = 0; c < cases; ++c) {
            ntl::GradCase gc = ntl::make_grad_case(rng, vocab);
            ntl::Mat<double> onehot = ntl::Mat<double>::Zero(gc.logits.rows(),
                                                             vocab.number_count());
            const auto mask = vocab.number_mask(gc.labels.ids, gc.labels.pad_mask);
            for (std::size_t i = 0; i < mask.size(); ++i)
                if (mask[i])
                    onehot(static_cast<int>(i), vocab.slice_index(gc.labels.ids[i])) = 1.0;
            const auto a = ntl::ntl_was_cdf(gc.logits, onehot, gc.labels, vocab);
            const auto b = ntl::ntl_was(gc.logits, gc.labels, vocab, euclid);
            worst = std::max(worst, std::abs(a.total - b.total));
        }
        outcomes.push_back({"ntl-was-cdf matches ntl-was on one-hot targets", worst < 1e-9,
                            "max deviation " + std::to_string(worst)});
    }

    bool all = true;
    for (const auto& o : outcomes) {
        std::cout << (o.pass ? "PASS" : "FAIL") << "  " << o.name << "  (" << o.detail << ")\n";
        all = all && o.pass;
    }
    return all ? kExitOk : kExitSelfcheck;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"number-token loss toolkit"};
    app.require_subcommand(1);
    app.fallthrough();  // parent flags (--force) may follow the subcommand
    bool force = false;
    app.add_flag("--force", force, "rerun even when the manifest is unchanged");

    // datagen
    auto* dg = app.add_subcommand("datagen", "generate arithmetic task datasets");
    std::string dg_task = "addsub", dg_range = "1..2", dg_out;
    int dg_extra = 3, dg_n = 1000, dg_ni = 0, dg_ne = 0;
    std::uint64_t dg_seed = 0;
    dg->add_option("--task", dg_task, "mul | addsub");
    dg->add_option("--train-digits", dg_range, "operand digit range, e.g. 1..2");
    dg->add_option("--extra-digits", dg_extra, "extrapolation digit count");
    dg->add_option("--n", dg_n, "training sample count");
    dg->add_option("--n-interp", dg_ni, "interpolation count (default n/10)");
    dg->add_option("--n-extra", dg_ne, "extrapolation count (default n/10)");
    dg->add_option("--seed", dg_seed);
    dg->add_option("--out", dg_out, "output directory");

    // train
    auto* tr = app.add_subcommand("train", "train a model");
    ntl::TrainConfig tc;
    std::string tr_loss = "ce", tr_config, tr_data, tr_eval, tr_resume;
    double tr_squash = 0;
    tr->add_option("--config", tr_config, "flat key = value config file");
    tr->add_option("--loss", tr_loss, "ce | ce+ntl-mse | ... | ce+gce+ntl-was-cdf");
    tr->add_option("--lambda", tc.lambda);
    tr->add_option("--sigma", tc.sigma);
    tr->add_option("--squash", tr_squash, "cost squash factor (euclidean when absent)");
    tr->add_option("--batch-size", tc.batch_size);
    tr->add_option("--steps", tc.steps);
    tr->add_option("--lr", tc.lr);
    tr->add_option("--weight-decay", tc.weight_decay);
    tr->add_option("--seed", tc.seed);
    tr->add_option("--eval-cadence", tc.eval_cadence);
    tr->add_option("--eval-limit", tc.eval_limit);
    tr->add_option("--data", tr_data, "training dataset (tsv)")->required();
    tr->add_option("--eval-data", tr_eval, "evaluation dataset (tsv)");
    tr->add_option("--resume", tr_resume, "checkpoint to resume from");
    tr->add_option("--out", tc.out_dir, "output directory");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string ev_ckpt, ev_data, ev_split = "interpolation", ev_out;
    int ev_limit = 0;
    ev->add_option("--checkpoint", ev_ckpt)->required();
    ev->add_option("--data", ev_data)->required();
    ev->add_option("--split", ev_split, "train | interpolation | extrapolation");
    ev->add_option("--limit", ev_limit, "cap on evaluated samples");
    ev->add_option("--out", ev_out, "output directory");

    // bench
    auto* be = app.add_subcommand("bench", "loss and training-step timings");
    ntl::BenchSpec bs;
    std::string be_out;
    be->add_option("--vocab-size", bs.vocab_size);
    be->add_option("--number-tokens", bs.number_tokens);
    be->add_option("--proportion", bs.number_proportion);
    be->add_option("--positions", bs.positions);
    be->add_option("--iterations", bs.iterations);
    be->add_option("--warmup", bs.warmup);
    be->add_option("--seed", bs.seed);
    be->add_option("--out", be_out, "output directory");

    // landscape
    auto* la = app.add_subcommand("landscape", "emit figure data");
    std::string la_figure, la_out;
    int la_res = 101;
    la->add_option("--figure", la_figure, "1b | 2")->required();
    la->add_option("--resolution", la_res, "grid points per axis");
    la->add_option("--out", la_out, "output directory");

    // selfcheck
    auto* sc = app.add_subcommand("selfcheck", "gradient and oracle checks");
    std::uint64_t sc_seed = 0;
    int sc_cases = 100;
    bool sc_bug = false;
    sc->add_option("--seed", sc_seed);
    sc->add_option("--cases", sc_cases, "random instances per suite");
    sc->add_flag("--inject-grad-bug", sc_bug,
                 "perturb one gradient to demonstrate failure reporting");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*dg)
            return cmd_datagen(dg_task, dg_range, dg_extra, dg_n, dg_ni, dg_ne, dg_seed, dg_out,
                               force);
        if (*tr) {
            if (!tr_config.empty()) {
                // flags given on the command line override the file
                ntl::TrainConfig flags = tc;
                tc = ntl::TrainConfig::load(tr_config);
                if (tr->count("--lambda")) tc.lambda = flags.lambda;
                if (tr->count("--sigma")) tc.sigma = flags.sigma;
                if (tr->count("--batch-size")) tc.batch_size = flags.batch_size;
                if (tr->count("--steps")) tc.steps = flags.steps;
                if (tr->count("--lr")) tc.lr = flags.lr;
                if (tr->count("--weight-decay")) tc.weight_decay = flags.weight_decay;
                if (tr->count("--seed")) tc.seed = flags.seed;
                if (tr->count("--eval-cadence")) tc.eval_cadence = flags.eval_cadence;
                if (tr->count("--eval-limit")) tc.eval_limit = flags.eval_limit;
                if (tr->count("--out")) tc.out_dir = flags.out_dir;
            }
            if (tr->count("--loss")) tc.loss = ntl::parse_loss_kind(tr_loss);
            if (tr->count("--squash")) tc.squash = tr_squash;
            return cmd_train(tc, tr_data, tr_eval, tr_resume, force);
        }
        if (*ev) return cmd_eval(ev_ckpt, ev_data, ev_split, ev_limit, ev_out, force);
        if (*be) return cmd_bench(bs, be_out, force);
        if (*la) return cmd_landscape(la_figure, la_res, la_out, force);
        if (*sc) return cmd_selfcheck(sc_seed, sc_cases, sc_bug);
    } catch (const std::invalid_argument& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}
