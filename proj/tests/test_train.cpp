#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ntl/train.hpp"

using namespace ntl;
namespace fs = std::filesystem;

namespace {

std::vector<TaskSample> tiny_dataset() {
    std::vector<TaskSample> out;
    auto add = [&](std::string q, long long v) {
        TaskSample s;
        s.question = std::move(q);
        s.answer = std::to_string(v);
        s.answer_value = v;
        s.max_operand_digits = 1;
        out.push_back(std::move(s));
    };
    add("What is 2 + 3?", 5);
    add("What is 7 - 4?", 3);
    add("What is 1 + 8?", 9);
    add("What is 6 - 6?", 0);
    return out;
}

TrainConfig tiny_config(fs::path out, LossKind loss, std::uint64_t seed = 1) {
    TrainConfig c;
    c.loss = loss;
    c.batch_size = 4;
    c.steps = 60;
    c.lr = 3e-3;
    c.seed = seed;
    c.eval_cadence = 30;
    c.out_dir = out.string();
    c.model.vocab_size = NumberVocabulary::arithmetic_default().size();
    c.model.context_length = 32;
    c.model.d_model = 32;
    c.model.n_heads = 2;
    c.model.n_layers = 1;
    c.model.d_ff = 64;
    c.model.seed = seed;
    return c;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// log.csv minus the trailing wall-clock column, which is never deterministic
std::string log_without_wall(const fs::path& p) {
    std::istringstream in(read_file(p));
    std::string out, line;
    while (std::getline(in, line)) {
        out += line.substr(0, line.rfind(','));
        out += '\n';
    }
    return out;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("loss kind names round trip") {
    for (LossKind k : {LossKind::CE, LossKind::CE_NTL_MSE, LossKind::CE_NTL_MAE,
                       LossKind::CE_NTL_HUBER, LossKind::CE_NTL_WAS, LossKind::CE_NTL_WAS_CDF,
                       LossKind::CE_GCE, LossKind::CE_GCE_NTL_WAS_CDF}) {
        CHECK(parse_loss_kind(loss_kind_name(k)) == k);
    }
    CHECK(loss_kind_name(LossKind::CE_NTL_WAS) == "ce+ntl-was");
    CHECK_THROWS_AS(parse_loss_kind("ntl"), std::invalid_argument);
}

TEST_CASE("config validation") {
    const auto vocab = NumberVocabulary::arithmetic_default();
    TrainConfig c = tiny_config("unused", LossKind::CE);
    c.validate(vocab);

    c.lambda = -0.1;
    CHECK_THROWS_AS(c.validate(vocab), std::invalid_argument);
    c = tiny_config("unused", LossKind::CE_GCE);
    c.sigma = 0;
    CHECK_THROWS_AS(c.validate(vocab), std::invalid_argument);
    c = tiny_config("unused", LossKind::CE);
    c.squash = 0.5;
    CHECK_THROWS_AS(c.validate(vocab), std::invalid_argument);

    // CDF transport needs a sorted equidistant number line
    const auto irregular = NumberVocabulary::build(
        {"a", "b"}, {{"x", 0.0}, {"y", 1.0}, {"z", 5.0}});
    c = tiny_config("unused", LossKind::CE_NTL_WAS_CDF);
    CHECK_THROWS_AS(c.validate(irregular), std::invalid_argument);
    c.validate(vocab);
}

TEST_CASE("config file round trip and unknown key rejection") {
    const fs::path dir = scratch("ntl_train_cfg");
    TrainConfig c = tiny_config((dir / "run").string(), LossKind::CE_NTL_WAS_CDF, 42);
    c.lambda = 0.7;
    c.sigma = 0.25;
    c.squash = 3.0;
    c.eval_limit = 17;
    const std::string path = (dir / "train.cfg").string();
    c.save(path);
    const TrainConfig back = TrainConfig::load(path);
    CHECK(back.loss == c.loss);
    CHECK(back.lambda == c.lambda);
    CHECK(back.sigma == c.sigma);
    REQUIRE(back.squash.has_value());
    CHECK(*back.squash == 3.0);
    CHECK(back.batch_size == c.batch_size);
    CHECK(back.steps == c.steps);
    CHECK(back.lr == c.lr);
    CHECK(back.weight_decay == c.weight_decay);
    CHECK(back.seed == c.seed);
    CHECK(back.eval_cadence == c.eval_cadence);
    CHECK(back.eval_limit == 17);
    CHECK(back.out_dir == c.out_dir);
    // vocab_size is derived from the vocabulary at run time, not persisted
    ModelConfig expected = c.model;
    expected.vocab_size = 0;
    CHECK(back.model == expected);

    std::ofstream(path, std::ios::app) << "warp_factor = 9\n";
    CHECK_THROWS_AS(TrainConfig::load(path), std::invalid_argument);
}

TEST_CASE("a tiny model memorizes a four-sample dataset") {
    const auto vocab = NumberVocabulary::arithmetic_default();
    const auto data = tiny_dataset();
    TrainConfig c = tiny_config(scratch("ntl_train_overfit"), LossKind::CE_NTL_WAS);
    c.steps = 250;
    const TrainResult r = run_training(c, data, data, vocab);
    REQUIRE(!r.log.records.empty());
    CHECK(r.log.records.back().loss_total < 0.05);
    CHECK(r.log.records.back().eval_accuracy == 1.0);
}

TEST_CASE("identical configs produce identical runs") {
    const auto vocab = NumberVocabulary::arithmetic_default();
    const auto data = tiny_dataset();
    const fs::path a = scratch("ntl_train_rep_a"), b = scratch("ntl_train_rep_b");
    run_training(tiny_config(a, LossKind::CE_NTL_MSE), data, data, vocab);
    run_training(tiny_config(b, LossKind::CE_NTL_MSE), data, data, vocab);
    CHECK(log_without_wall(a / "log.csv") == log_without_wall(b / "log.csv"));
    CHECK(read_file(a / "checkpoint.bin") == read_file(b / "checkpoint.bin"));
}

TEST_CASE("zero weight on the number term degenerates to plain cross entropy") {
    const auto vocab = NumberVocabulary::arithmetic_default();
    const auto data = tiny_dataset();
    const fs::path a = scratch("ntl_train_l0_a"), b = scratch("ntl_train_l0_b");
    TrainConfig ca = tiny_config(a, LossKind::CE_NTL_WAS);
    ca.lambda = 0.0;
    TrainConfig cb = tiny_config(b, LossKind::CE);
    run_training(ca, data, data, vocab);
    run_training(cb, data, data, vocab);
    CHECK(log_without_wall(a / "log.csv") == log_without_wall(b / "log.csv"));
    CHECK(read_file(a / "checkpoint.bin") == read_file(b / "checkpoint.bin"));
}

TEST_CASE("resuming halfway reproduces the uninterrupted run bitwise") {
    const auto vocab = NumberVocabulary::arithmetic_default();
    const auto data = tiny_dataset();
    const fs::path full = scratch("ntl_train_res_full");
    const fs::path half = scratch("ntl_train_res_half");
    const fs::path done = scratch("ntl_train_res_done");

    run_training(tiny_config(full, LossKind::CE_NTL_WAS), data, data, vocab);

    TrainConfig ch = tiny_config(half, LossKind::CE_NTL_WAS);
    ch.steps = 30;
    run_training(ch, data, data, vocab);

    TrainConfig cd = tiny_config(done, LossKind::CE_NTL_WAS);
    run_training(cd, data, data, vocab, (half / "checkpoint.bin").string());
    CHECK(read_file(done / "checkpoint.bin") == read_file(full / "checkpoint.bin"));

    // resuming past the requested horizon is an error
    TrainConfig cs = tiny_config(scratch("ntl_train_res_short"), LossKind::CE_NTL_WAS);
    cs.steps = 10;
    CHECK_THROWS(run_training(cs, data, data, vocab, (full / "checkpoint.bin").string()));
}

TEST_CASE("a diverging run aborts with a diagnostic") {
    const auto vocab = NumberVocabulary::arithmetic_default();
    const auto data = tiny_dataset();
    const fs::path dir = scratch("ntl_train_nan");
    TrainConfig c = tiny_config(dir, LossKind::CE_NTL_MSE);
    c.lr = 1e6;
    c.steps = 200;
    CHECK_THROWS_AS(run_training(c, data, data, vocab), std::runtime_error);
    CHECK(fs::exists(dir / "nan_diagnostic.txt"));
}
