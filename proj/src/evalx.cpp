#include "ntl/evalx.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace ntl {

double signed_log10(double x) {
    double s = x < 0 ? -1.0 : 1.0;
    return s * std::log10(1.0 + std::abs(x));
}

std::string canonicalize_answer(const std::string& s) {
    std::string t = s;
    // trim surrounding spaces
    auto b = t.find_first_not_of(' ');
    if (b == std::string::npos) return "";
    auto e = t.find_last_not_of(' ');
    t = t.substr(b, e - b + 1);
    bool neg = false;
    std::size_t i = 0;
    if (i < t.size() && (t[i] == '-' || t[i] == '+')) {
        neg = t[i] == '-';
        ++i;
    }
    std::size_t start = i;
    while (i < t.size() && t[i] == '0' && i + 1 < t.size() && t[i + 1] != '.') ++i;
    std::string digits = t.substr(i);
    if (digits.empty() && start < t.size()) digits = "0";
    if (digits.empty()) return t;  // not numeric; leave as-is
    if (digits == "0") neg = false;
    return (neg ? "-" : "") + digits;
}

namespace {

std::optional<double> parse_number(const std::string& s) {
    std::string t = s;
    auto b = t.find_first_not_of(' ');
    if (b == std::string::npos) return std::nullopt;
    auto e = t.find_last_not_of(' ');
    t = t.substr(b, e - b + 1);
    if (t.empty()) return std::nullopt;
    double v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size()) return std::nullopt;
    return v;
}

std::vector<double> ranks(const std::vector<double>& x) {
    std::vector<int> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return x[a] < x[b]; });
    std::vector<double> r(x.size());
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
        double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

std::optional<double> pearson_corr(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    if (n < 2) return std::nullopt;
    double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
    double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
    double num = 0, da = 0, db = 0;
    for (std::size_t i = 0; i < n; ++i) {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma) * (a[i] - ma);
        db += (b[i] - mb) * (b[i] - mb);
    }
    if (da == 0 || db == 0) return std::nullopt;
    return num / std::sqrt(da * db);
}

std::string fmt_opt(const std::optional<double>& v) {
    if (!v) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", *v);
    return buf;
}

}  // namespace

std::string MetricsReport::csv_header() {
    return "accuracy,mae,r2,mape,pearson,spearman,parse_failure_rate,n,log_transform";
}

std::string MetricsReport::to_csv() const {
    std::ostringstream os;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", exact_match_accuracy);
    os << buf << ',' << fmt_opt(mae) << ',' << fmt_opt(r2) << ',' << fmt_opt(mape) << ','
       << fmt_opt(pearson) << ',' << fmt_opt(spearman) << ',';
    std::snprintf(buf, sizeof(buf), "%.10g", parse_failure_rate);
    os << buf << ',' << n << ',' << (log_transform_applied ? 1 : 0);
    return os.str();
}

std::string MetricsReport::to_text() const {
    std::ostringstream os;
    os << "n=" << n << " accuracy=" << exact_match_accuracy
       << " mae=" << fmt_opt(mae) << " r2=" << fmt_opt(r2) << " mape=" << fmt_opt(mape)
       << " pearson=" << fmt_opt(pearson) << " spearman=" << fmt_opt(spearman)
       << " parse_failures=" << parse_failure_rate
       << (log_transform_applied ? " (mae/r2 on signed-log values)" : "");
    for (const auto& [bucket, v] : mape_by_bucket)
        os << "\n  bucket " << bucket << " digits: mape=" << v;
    return os.str();
}

MetricsReport evaluate(const Parameters<float>& params, const ModelConfig& config,
                       const std::vector<TaskSample>& samples, const NumberVocabulary& vocab,
                       const EvalOptions& options) {
    MetricsReport rep;
    rep.n = static_cast<int>(samples.size());
    rep.log_transform_applied = options.log_transform;
    if (samples.empty()) return rep;

    const int eos = vocab.id_of("<eos>");
    if (eos < 0) throw std::invalid_argument("vocabulary lacks <eos>");
    int correct = 0, parse_failures = 0;
    std::vector<double> truth, pred;                     // raw values (parsed only)
    std::map<int, std::pair<double, int>> bucket_acc;    // bucket -> (sum rel err, count)
    double mape_sum = 0;
    int mape_n = 0;

    for (const auto& s : samples) {
        TokenSequence prompt = vocab.encode_text(s.question);
        std::vector<int> gen =
            generate_greedy(params, config, prompt.ids, options.max_new_tokens, eos);
        std::vector<int> answer_ids(gen.begin() + static_cast<std::ptrdiff_t>(prompt.ids.size()),
                                    gen.end());
        if (!answer_ids.empty() && answer_ids.back() == eos) answer_ids.pop_back();
        std::string text = vocab.decode(answer_ids);
        if (canonicalize_answer(text) == canonicalize_answer(s.answer)) ++correct;

        auto v = parse_number(text);
        double rel;
        if (!v) {
            ++parse_failures;
            rel = 1.0;  // worst-case relative error for bucket aggregation
        } else {
            truth.push_back(s.answer_value);
            pred.push_back(*v);
            const double truth_v = static_cast<double>(s.answer_value);
            rel = std::abs(*v - truth_v) / std::max(std::abs(truth_v), 1.0);
        }
        mape_sum += rel;
        ++mape_n;
        auto& [sum, cnt] = bucket_acc[s.max_operand_digits];
        sum += rel;
        ++cnt;
    }

    rep.exact_match_accuracy = static_cast<double>(correct) / rep.n;
    rep.parse_failure_rate = static_cast<double>(parse_failures) / rep.n;
    if (mape_n > 0) rep.mape = mape_sum / mape_n;
    for (const auto& [bucket, sc] : bucket_acc)
        rep.mape_by_bucket[bucket] = sc.first / sc.second;

    if (!truth.empty()) {
        std::vector<double> t = truth, p = pred;
        if (options.log_transform) {
            for (auto& x : t) x = signed_log10(x);
            for (auto& x : p) x = signed_log10(x);
        }
        double mae = 0;
        for (std::size_t i = 0; i < t.size(); ++i) mae += std::abs(p[i] - t[i]);
        rep.mae = mae / static_cast<double>(t.size());

        double mean_t = std::accumulate(t.begin(), t.end(), 0.0) / static_cast<double>(t.size());
        double ss_res = 0, ss_tot = 0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            ss_res += (t[i] - p[i]) * (t[i] - p[i]);
            ss_tot += (t[i] - mean_t) * (t[i] - mean_t);
        }
        if (ss_tot > 0) rep.r2 = 1.0 - ss_res / ss_tot;
        rep.pearson = pearson_corr(t, p);
        rep.spearman = pearson_corr(ranks(truth), ranks(pred));
    }
    return rep;
}

void TrainLog::save_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "step,loss_total,loss_ce,loss_ntl,eval_accuracy,eval_mae,eval_mape,wall_ms\n";
    char buf[256];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof(buf), "%lld,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                      static_cast<long long>(r.step), r.loss_total, r.loss_ce, r.loss_ntl,
                      r.eval_accuracy, r.eval_mae, r.eval_mape, r.wall_ms);
        out << buf;
    }
}

void TrainLog::save_bucket_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "step,bucket,mape\n";
    char buf[128];
    for (const auto& r : records)
        for (const auto& [bucket, v] : r.mape_by_bucket) {
            std::snprintf(buf, sizeof(buf), "%lld,%d,%.10g\n", static_cast<long long>(r.step),
                          bucket, v);
            out << buf;
        }
}

namespace {
std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) out.push_back(f);
    return out;
}
}  // namespace

TrainLog TrainLog::load_csv(const std::string& path, const std::string& bucket_path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    TrainLog log;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty log: " + path);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 8) throw std::runtime_error("malformed log row in " + path);
        TrainLogRecord r;
        r.step = std::stoll(f[0]);
        r.loss_total = std::stod(f[1]);
        r.loss_ce = std::stod(f[2]);
        r.loss_ntl = std::stod(f[3]);
        r.eval_accuracy = std::stod(f[4]);
        r.eval_mae = std::stod(f[5]);
        r.eval_mape = std::stod(f[6]);
        r.wall_ms = std::stod(f[7]);
        log.records.push_back(r);
    }
    if (!bucket_path.empty()) {
        std::ifstream bin(bucket_path);
        if (!bin) throw std::runtime_error("cannot open " + bucket_path);
        std::getline(bin, line);
        std::map<std::int64_t, std::size_t> by_step;
        for (std::size_t i = 0; i < log.records.size(); ++i) by_step[log.records[i].step] = i;
        while (std::getline(bin, line)) {
            if (line.empty()) continue;
            auto f = split_csv_line(line);
            if (f.size() != 3) throw std::runtime_error("malformed bucket row in " + bucket_path);
            auto it = by_step.find(std::stoll(f[0]));
            if (it == by_step.end())
                throw std::runtime_error("bucket row references unknown step in " + bucket_path);
            log.records[it->second].mape_by_bucket[std::stoi(f[1])] = std::stod(f[2]);
        }
    }
    return log;
}

std::vector<CrossingRecord> compare_runs(const TrainLog& log_a, const TrainLog& log_b,
                                         double threshold) {
    if (log_a.records.size() != log_b.records.size())
        throw std::invalid_argument("compare_runs: logs have different eval cadences");
    for (std::size_t i = 0; i < log_a.records.size(); ++i)
        if (log_a.records[i].step != log_b.records[i].step)
            throw std::invalid_argument("compare_runs: logs have different eval cadences");

    std::map<int, CrossingRecord> out;
    auto scan = [&](const TrainLog& log, bool is_a) {
        for (const auto& r : log.records)
            for (const auto& [bucket, v] : r.mape_by_bucket) {
                auto& rec = out[bucket];
                rec.bucket = bucket;
                auto& slot = is_a ? rec.first_step_a : rec.first_step_b;
                if (!slot && v < threshold) slot = r.step;
            }
    };
    scan(log_a, true);
    scan(log_b, false);
    std::vector<CrossingRecord> v;
    for (auto& [_, rec] : out) v.push_back(rec);
    return v;
}

}  // namespace ntl
