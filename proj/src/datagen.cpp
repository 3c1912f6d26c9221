#include "ntl/datagen.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <stdexcept>
#include <unordered_set>

namespace ntl {

void GenSpec::validate() const {
    if (train_digits_min < 1 || train_digits_max < train_digits_min)
        throw std::invalid_argument("invalid training digit range");
    if (extrapolation_digits <= train_digits_max)
        throw std::invalid_argument("extrapolation digits must exceed the training range");
    if (n_train < 1 || n_interpolation < 0 || n_extrapolation < 0)
        throw std::invalid_argument("invalid sample counts");
}

namespace {

long long uniform_with_digits(std::mt19937_64& rng, int digits) {
    // k = 1 covers 0..9; larger k excludes leading zeros.
    long long lo = 1;
    for (int i = 1; i < digits; ++i) lo *= 10;
    if (digits == 1) lo = 0;
    const long long hi = (digits == 1) ? 9 : lo * 10 - 1;
    return std::uniform_int_distribution<long long>(lo, hi)(rng);
}

int digit_count(long long x) {
    int n = 1;
    for (x = std::llabs(x); x >= 10; x /= 10) ++n;
    return n;
}

struct Rejector {
    std::unordered_set<std::string> seen;
    long long attempts = 0, budget = 0;

    explicit Rejector(long long total_requested) : budget(500 * total_requested + 10000) {}

    bool accept(const std::string& question) {
        if (++attempts > budget)
            throw std::runtime_error("requested count exceeds distinct-question capacity");
        return seen.insert(question).second;
    }
};

template <typename MakeSample>
std::vector<TaskSample> run_generator(const GenSpec& spec, MakeSample&& make) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    Rejector rej(spec.n_train + spec.n_interpolation + spec.n_extrapolation);
    std::vector<TaskSample> out;
    auto emit = [&](Split split, int count, bool extrapolate) {
        for (int i = 0; i < count;) {
            TaskSample s = make(rng, extrapolate);
            if (!rej.accept(s.question)) continue;
            s.split = split;
            out.push_back(std::move(s));
            ++i;
        }
    };
    emit(Split::Train, spec.n_train, false);
    emit(Split::Interpolation, spec.n_interpolation, false);
    emit(Split::Extrapolation, spec.n_extrapolation, true);
    return out;
}

}  // namespace

std::vector<TaskSample> gen_multiplication(const GenSpec& spec) {
    return run_generator(spec, [&spec](std::mt19937_64& rng, bool extrapolate) {
        const int lo = spec.train_digits_min;
        const int hi = extrapolate ? spec.extrapolation_digits : spec.train_digits_max;
        std::uniform_int_distribution<int> digits(lo, hi);
        int k, l;
        do {
            k = digits(rng);
            l = digits(rng);
        } while (extrapolate && std::max(k, l) != spec.extrapolation_digits);
        const long long a = uniform_with_digits(rng, k);
        const long long b = uniform_with_digits(rng, l);
        TaskSample s;
        s.question = "What is " + std::to_string(a) + " * " + std::to_string(b) + "?";
        s.answer_value = a * b;
        s.answer = std::to_string(s.answer_value);
        s.max_operand_digits = std::max(k, l);
        return s;
    });
}

std::vector<TaskSample> gen_addsub(const GenSpec& spec) {
    return run_generator(spec, [&spec](std::mt19937_64& rng, bool extrapolate) {
        const int lo = spec.train_digits_min;
        const int hi = extrapolate ? spec.extrapolation_digits : spec.train_digits_max;
        std::uniform_int_distribution<int> digits(lo, hi);
        std::uniform_int_distribution<int> n_ops_dist(2, 4);
        std::uniform_int_distribution<int> sign(0, 1);
        int n_ops;
        std::vector<int> ds;
        do {
            n_ops = n_ops_dist(rng);
            ds.clear();
            for (int i = 0; i < n_ops; ++i) ds.push_back(digits(rng));
        } while (extrapolate &&
                 *std::max_element(ds.begin(), ds.end()) != spec.extrapolation_digits);
        TaskSample s;
        std::string expr;
        long long value = 0;
        int max_d = 0;
        for (int i = 0; i < n_ops; ++i) {
            const long long a = uniform_with_digits(rng, ds[i]);
            max_d = std::max(max_d, ds[i]);
            if (i == 0) {
                expr = std::to_string(a);
                value = a;
            } else if (sign(rng)) {
                expr += " + " + std::to_string(a);
                value += a;
            } else {
                expr += " - " + std::to_string(a);
                value -= a;
            }
        }
        s.question = "What is " + expr + "?";
        s.answer_value = value;
        s.answer = std::to_string(value);
        s.max_operand_digits = max_d;
        return s;
    });
}

std::vector<TaskSample> generate(const GenSpec& spec) {
    return spec.task == TaskKind::AddSub ? gen_addsub(spec) : gen_multiplication(spec);
}

void save_samples(const std::vector<TaskSample>& samples, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    for (const auto& s : samples) f << s.question << '\t' << s.answer << '\n';
}

std::vector<TaskSample> load_samples(const std::string& path, Split split) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::vector<TaskSample> out;
    std::string line;
    while (std::getline(f, line)) {
        auto tab = line.find('\t');
        if (tab == std::string::npos) throw std::runtime_error("bad dataset line: " + line);
        TaskSample s;
        s.question = line.substr(0, tab);
        s.answer = line.substr(tab + 1);
        s.answer_value = std::stoll(s.answer);
        s.split = split;
        // difficulty bucket = longest digit run in the question
        int run = 0;
        for (char c : s.question) {
            run = std::isdigit(static_cast<unsigned char>(c)) ? run + 1 : 0;
            s.max_operand_digits = std::max(s.max_operand_digits, run);
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<TaskSample> filter_split(const std::vector<TaskSample>& samples, Split split) {
    std::vector<TaskSample> out;
    for (const auto& s : samples)
        if (s.split == split) out.push_back(s);
    return out;
}

}  // namespace ntl
