#include "ntl/vocab.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace ntl {

namespace {

bool valid_token_string(const std::string& s) {
    if (s.empty()) return false;
    return s.find('\t') == std::string::npos && s.find('\n') == std::string::npos;
}

bool spacing_test(const std::vector<double>& vals) {
    // Strictly increasing with constant gap, rel tol 1e-12. Vacuous for <= 2
    // points, except that two points must still be increasing.
    if (vals.size() == 2) return vals[1] > vals[0];
    if (vals.size() < 2) return true;
    const double gap0 = vals[1] - vals[0];
    if (gap0 <= 0.0) return false;
    for (std::size_t i = 1; i + 1 < vals.size(); ++i) {
        const double gap = vals[i + 1] - vals[i];
        if (gap <= 0.0 ||
            std::abs(gap - gap0) > 1e-12 * std::max(std::abs(gap), std::abs(gap0)))
            return false;
    }
    return true;
}

}  // namespace

NumberVocabulary NumberVocabulary::build(
    const std::vector<std::string>& text_tokens,
    const std::vector<std::pair<std::string, double>>& number_tokens) {
    std::vector<std::pair<std::string, std::optional<double>>> entries;
    for (const auto& t : text_tokens) entries.emplace_back(t, std::nullopt);
    for (const auto& [t, v] : number_tokens) entries.emplace_back(t, v);
    return from_entries(entries);
}

NumberVocabulary NumberVocabulary::from_entries(
    const std::vector<std::pair<std::string, std::optional<double>>>& entries) {
    NumberVocabulary v;
    for (const auto& [tok, value] : entries) {
        if (!valid_token_string(tok))
            throw std::invalid_argument("invalid token string: '" + tok + "'");
        if (v.lookup_.count(tok))
            throw std::invalid_argument("duplicate token: '" + tok + "'");
        int id = static_cast<int>(v.tokens_.size());
        v.lookup_.emplace(tok, id);
        v.tokens_.push_back(tok);
        v.values_.push_back(value);
        v.slice_of_id_.push_back(-1);
        if (value) {
            if (!std::isfinite(*value))
                throw std::invalid_argument("non-finite value for token '" + tok + "'");
            v.slice_of_id_.back() = static_cast<int>(v.number_indices_.size());
            v.number_indices_.push_back(id);
            v.number_values_.push_back(*value);
        }
    }
    if (v.number_indices_.empty())
        throw std::invalid_argument("vocabulary needs at least one number token");
    v.sorted_equidistant_ = spacing_test(v.number_values_);
    return v;
}

NumberVocabulary NumberVocabulary::arithmetic_default() {
    std::vector<std::string> text = {"<pad>", "<eos>", " ", "+", "-", "*", ".", "?",
                                     "W", "h", "a", "t", "i", "s"};
    std::vector<std::pair<std::string, double>> nums;
    for (int d = 0; d <= 9; ++d) nums.emplace_back(std::string(1, char('0' + d)), double(d));
    return build(text, nums);
}

std::optional<double> NumberVocabulary::value_of(int id) const {
    return values_.at(id);
}

double NumberVocabulary::value_spacing() const {
    if (number_values_.size() < 2)
        throw std::logic_error("value_spacing needs >= 2 number tokens");
    return number_values_[1] - number_values_[0];
}

int NumberVocabulary::id_of(const std::string& token) const {
    auto it = lookup_.find(token);
    return it == lookup_.end() ? -1 : it->second;
}

int NumberVocabulary::slice_index(int id) const {
    return slice_of_id_.at(id);
}

TokenSequence NumberVocabulary::encode_number(const std::string& decimal) const {
    // optional sign, digits, optional '.' digits
    std::size_t i = 0;
    const std::size_t n = decimal.size();
    auto malformed = [&] {
        throw std::invalid_argument("malformed numeric string: '" + decimal + "'");
    };
    if (i < n && (decimal[i] == '-' || decimal[i] == '+')) ++i;
    std::size_t digits = 0;
    while (i < n && std::isdigit(static_cast<unsigned char>(decimal[i]))) ++i, ++digits;
    if (digits == 0) malformed();
    if (i < n && decimal[i] == '.') {
        ++i;
        std::size_t frac = 0;
        while (i < n && std::isdigit(static_cast<unsigned char>(decimal[i]))) ++i, ++frac;
        if (frac == 0) malformed();
    }
    if (i != n) malformed();
    return encode_text(decimal);
}

TokenSequence NumberVocabulary::encode_text(const std::string& text) const {
    TokenSequence seq;
    seq.text = text;
    seq.ids.reserve(text.size());
    for (char c : text) {
        int id = id_of(std::string(1, c));
        if (id < 0)
            throw std::invalid_argument(std::string("no token for character '") + c + "'");
        seq.ids.push_back(id);
    }
    return seq;
}

std::string NumberVocabulary::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) out += token(id);
    return out;
}

std::optional<std::pair<double, std::size_t>>
NumberVocabulary::decode_number_span(const std::vector<int>& ids, std::size_t start) const {
    if (start >= ids.size()) throw std::out_of_range("decode_number_span: start out of bounds");
    std::size_t i = start;
    std::string lit;
    auto tok_is = [&](std::size_t k, const char* s) { return token(ids[k]) == s; };
    auto tok_digit = [&](std::size_t k) {
        const std::string& t = token(ids[k]);
        return std::isdigit(static_cast<unsigned char>(t[0])) && value_of(ids[k]).has_value();
    };
    if (tok_is(i, "-") || tok_is(i, "+")) {
        if (i + 1 >= ids.size() || !tok_digit(i + 1)) return std::nullopt;
        lit += token(ids[i]);
        ++i;
    }
    if (i >= ids.size() || !tok_digit(i)) return std::nullopt;
    while (i < ids.size() && tok_digit(i)) lit += token(ids[i++]);
    if (i + 1 < ids.size() && tok_is(i, ".") && tok_digit(i + 1)) {
        lit += ".";
        ++i;
        while (i < ids.size() && tok_digit(i)) lit += token(ids[i++]);
    }
    return std::make_pair(std::stod(lit), i);
}

std::vector<bool> NumberVocabulary::number_mask(const std::vector<int>& label_ids,
                                                const std::vector<bool>& pad_mask) const {
    if (label_ids.size() != pad_mask.size())
        throw std::invalid_argument("number_mask: label/mask size mismatch");
    std::vector<bool> out(label_ids.size());
    for (std::size_t i = 0; i < label_ids.size(); ++i) {
        int id = label_ids[i];
        if (id < 0 || id >= size()) throw std::out_of_range("number_mask: label id out of range");
        out[i] = pad_mask[i] && values_[id].has_value();
    }
    return out;
}

void NumberVocabulary::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    for (int i = 0; i < size(); ++i) {
        f << tokens_[i] << '\t';
        if (values_[i]) {
            char buf[64];
            auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), *values_[i]);
            f.write(buf, end - buf);
        } else {
            f << "NONE";
        }
        f << '\n';
    }
}

NumberVocabulary NumberVocabulary::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::vector<std::pair<std::string, std::optional<double>>> entries;
    std::string line;
    while (std::getline(f, line)) {
        auto tab = line.find('\t');
        if (tab == std::string::npos) throw std::runtime_error("bad vocab line: " + line);
        std::string tok = line.substr(0, tab);
        std::string val = line.substr(tab + 1);
        if (val == "NONE") {
            entries.emplace_back(tok, std::nullopt);
        } else {
            double x;
            auto [p, ec] = std::from_chars(val.data(), val.data() + val.size(), x);
            if (ec != std::errc() || p != val.data() + val.size())
                throw std::runtime_error("bad vocab value: " + val);
            entries.emplace_back(tok, x);
        }
    }
    return from_entries(entries);
}

}  // namespace ntl
