#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ntl {

enum class Split { Train, Interpolation, Extrapolation };

struct TaskSample {
    std::string question;
    std::string answer;
    long long answer_value = 0;
    int max_operand_digits = 0;  // difficulty bucket
    Split split = Split::Train;
};

enum class TaskKind { AddSub, Multiplication };

struct GenSpec {
    TaskKind task = TaskKind::AddSub;
    int train_digits_min = 1;
    int train_digits_max = 2;
    int extrapolation_digits = 3;  // must exceed train_digits_max
    int n_train = 1000;
    int n_interpolation = 100;
    int n_extrapolation = 100;
    std::uint64_t seed = 0;

    void validate() const;
};

/// `What is {a} * {b}?` with operands uniform per digit count (no leading
/// zeros beyond one digit). Extrapolation samples have at least one factor at
/// the extrapolation digit count. Question strings are disjoint across splits.
std::vector<TaskSample> gen_multiplication(const GenSpec& spec);

/// `What is {expr}?` with 2-4 operands joined by + and -. Answers may be
/// negative. Same split-disjointness contract as multiplication.
std::vector<TaskSample> gen_addsub(const GenSpec& spec);

std::vector<TaskSample> generate(const GenSpec& spec);

/// One sample per line: `question<TAB>answer`, UTF-8.
void save_samples(const std::vector<TaskSample>& samples, const std::string& path);
std::vector<TaskSample> load_samples(const std::string& path, Split split);

std::vector<TaskSample> filter_split(const std::vector<TaskSample>& samples, Split split);

}  // namespace ntl
