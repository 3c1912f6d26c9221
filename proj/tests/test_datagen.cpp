#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "ntl/datagen.hpp"

using namespace ntl;

namespace {

// Independent re-evaluation of "What is <expr>?" with +, -, * at equal
// precedence, left to right (the generators never mix * with + or -).
long long eval_question(const std::string& q) {
    REQUIRE(q.rfind("What is ", 0) == 0);
    REQUIRE(q.back() == '?');
    std::istringstream in(q.substr(8, q.size() - 9));
    long long acc;
    in >> acc;
    char op;
    long long operand;
    while (in >> op >> operand) {
        if (op == '+') acc += operand;
        else if (op == '-') acc -= operand;
        else if (op == '*') acc *= operand;
        else FAIL("unexpected operator ", op);
    }
    return acc;
}

int max_operand_digits(const std::string& q) {
    int best = 0, run = 0;
    for (char ch : q) {
        if (ch >= '0' && ch <= '9') best = std::max(best, ++run);
        else run = 0;
    }
    return best;
}

GenSpec small_spec(TaskKind task) {
    GenSpec s;
    s.task = task;
    s.train_digits_min = 1;
    s.train_digits_max = 2;
    s.extrapolation_digits = 3;
    s.n_train = 300;
    s.n_interpolation = 50;
    s.n_extrapolation = 50;
    s.seed = 7;
    return s;
}

}  // namespace

TEST_CASE("generation is deterministic in the seed") {
    const GenSpec s = small_spec(TaskKind::AddSub);
    const auto a = generate(s);
    const auto b = generate(s);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].question == b[i].question);
        CHECK(a[i].answer == b[i].answer);
    }
    GenSpec s2 = s;
    s2.seed = 8;
    const auto c = generate(s2);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.size(); ++i) any_diff |= (a[i].question != c[i].question);
    CHECK(any_diff);
}

TEST_CASE("answers match an independent evaluation of the question") {
    for (TaskKind task : {TaskKind::AddSub, TaskKind::Multiplication}) {
        const auto samples = generate(small_spec(task));
        CHECK(samples.size() == 400);
        for (const auto& s : samples) {
            CHECK(eval_question(s.question) == s.answer_value);
            CHECK(std::to_string(s.answer_value) == s.answer);
            CHECK(max_operand_digits(s.question) == s.max_operand_digits);
        }
    }
}

TEST_CASE("splits are disjoint on question strings and sized as requested") {
    const auto samples = generate(small_spec(TaskKind::Multiplication));
    std::set<std::string> train, interp, extra;
    for (const auto& s : samples) {
        auto& dest = s.split == Split::Train ? train
                     : s.split == Split::Interpolation ? interp : extra;
        const bool inserted = dest.insert(s.question).second;
        CHECK(inserted);  // no duplicates within a split either
    }
    CHECK(train.size() == 300);
    CHECK(interp.size() == 50);
    CHECK(extra.size() == 50);
    for (const auto& q : interp) CHECK(train.count(q) == 0);
    for (const auto& q : extra) {
        CHECK(train.count(q) == 0);
        CHECK(interp.count(q) == 0);
    }
}

TEST_CASE("digit ranges respect the split contract") {
    const auto samples = generate(small_spec(TaskKind::AddSub));
    bool extra_hits_max = false;
    for (const auto& s : samples) {
        const int d = max_operand_digits(s.question);
        if (s.split == Split::Extrapolation) {
            CHECK(d == 3);  // at least one operand at the extrapolation width
            extra_hits_max = true;
        } else {
            CHECK(d >= 1);
            CHECK(d <= 2);
        }
    }
    CHECK(extra_hits_max);
}

TEST_CASE("multiplication digit counts are roughly uniform over the range") {
    GenSpec s;
    s.task = TaskKind::Multiplication;
    s.train_digits_min = 1;
    s.train_digits_max = 5;
    s.extrapolation_digits = 6;
    s.n_train = 10000;
    s.n_interpolation = 10;
    s.n_extrapolation = 10;
    s.seed = 3;
    const auto samples = filter_split(generate(s), Split::Train);
    std::map<int, int> by_digits;
    int operands = 0;
    for (const auto& t : samples) {
        // count the digit length of each operand independently
        int run = 0;
        for (char ch : t.question + "?") {
            if (ch >= '0' && ch <= '9') {
                ++run;
            } else if (run > 0) {
                ++by_digits[run];
                ++operands;
                run = 0;
            }
        }
    }
    CHECK(operands == 20000);
    for (int k = 1; k <= 5; ++k) {
        const double freq = static_cast<double>(by_digits[k]) / operands;
        CHECK(freq > 0.15);
        CHECK(freq < 0.25);
    }
}

TEST_CASE("hand-checked sample texture") {
    const auto samples = generate(small_spec(TaskKind::Multiplication));
    for (const auto& s : samples) {
        CHECK(s.question.find(" * ") != std::string::npos);
        CHECK(s.question.find("  ") == std::string::npos);
    }
    const auto sums = generate(small_spec(TaskKind::AddSub));
    bool saw_plus = false, saw_minus = false, saw_negative = false;
    for (const auto& s : sums) {
        saw_plus |= s.question.find(" + ") != std::string::npos;
        saw_minus |= s.question.find(" - ") != std::string::npos;
        saw_negative |= s.answer_value < 0;
    }
    CHECK(saw_plus);
    CHECK(saw_minus);
    CHECK(saw_negative);
}

TEST_CASE("save and load round trip") {
    namespace fs = std::filesystem;
    const auto samples = generate(small_spec(TaskKind::AddSub));
    const auto train = filter_split(samples, Split::Train);
    const std::string path = (fs::temp_directory_path() / "ntl_datagen_test.tsv").string();
    save_samples(train, path);
    const auto back = load_samples(path, Split::Train);
    REQUIRE(back.size() == train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
        CHECK(back[i].question == train[i].question);
        CHECK(back[i].answer == train[i].answer);
        CHECK(back[i].answer_value == train[i].answer_value);
        CHECK(back[i].max_operand_digits == train[i].max_operand_digits);
        CHECK(back[i].split == Split::Train);
    }
    std::remove(path.c_str());
}

TEST_CASE("invalid specs are rejected") {
    GenSpec s = small_spec(TaskKind::AddSub);
    s.extrapolation_digits = 2;  // must exceed the train range
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = small_spec(TaskKind::AddSub);
    s.train_digits_min = 0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    s = small_spec(TaskKind::AddSub);
    s.n_train = 0;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("impossible uniqueness demands fail loudly") {
    GenSpec s;
    s.task = TaskKind::Multiplication;
    s.train_digits_min = 1;
    s.train_digits_max = 1;
    s.extrapolation_digits = 2;
    s.n_train = 500;  // only 81 distinct one-digit products exist as questions
    s.n_interpolation = 10;
    s.n_extrapolation = 10;
    CHECK_THROWS(generate(s));
}
