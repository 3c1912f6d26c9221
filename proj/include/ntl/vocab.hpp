#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace ntl {

/// A token sequence together with its rendered string form.
struct TokenSequence {
    std::vector<int> ids;
    std::string text;
};

/// Vocabulary with a partial token -> numeric value map. The value-bearing
/// tokens form the number slice consumed by every number-aware loss.
///
/// Immutable after construction; all member functions are const.
class NumberVocabulary {
public:
    /// text_tokens carry no value; number_tokens are (string, value) pairs.
    /// Throws std::invalid_argument on duplicate tokens, non-finite values,
    /// or tokens containing tab/newline (reserved by the file format).
    static NumberVocabulary build(const std::vector<std::string>& text_tokens,
                                  const std::vector<std::pair<std::string, double>>& number_tokens);

    /// Builds from (token, optional value) pairs in final index order.
    static NumberVocabulary from_entries(
        const std::vector<std::pair<std::string, std::optional<double>>>& entries);

    /// "<pad>", "<eos>", space, arithmetic symbols, question template letters,
    /// and digits 0-9 with values 0-9. Covers everything datagen emits.
    static NumberVocabulary arithmetic_default();

    int size() const { return static_cast<int>(tokens_.size()); }
    const std::string& token(int id) const { return tokens_.at(id); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    /// Numeric value of token id, or nullopt for text tokens.
    std::optional<double> value_of(int id) const;

    /// Indices of value-bearing tokens, in insertion order.
    const std::vector<int>& number_indices() const { return number_indices_; }
    int number_count() const { return static_cast<int>(number_indices_.size()); }

    /// Values aligned with number_indices().
    const std::vector<double>& number_values() const { return number_values_; }

    /// True iff number values, in index order, are strictly increasing with
    /// constant spacing (relative tolerance 1e-12). Vacuously true for <= 2.
    bool sorted_equidistant() const { return sorted_equidistant_; }

    /// Constant spacing between consecutive number values. Only meaningful
    /// when sorted_equidistant() holds and number_count() >= 2.
    double value_spacing() const;

    /// Token id by string, or -1 when absent.
    int id_of(const std::string& token) const;

    /// Position of a vocabulary id inside the number slice, or -1.
    int slice_index(int id) const;

    /// One token per character: sign, digits, decimal point.
    /// Throws std::invalid_argument on malformed input or missing tokens.
    TokenSequence encode_number(const std::string& decimal) const;

    /// Encodes arbitrary text one character per token (digits resolve to the
    /// value-bearing tokens). Throws when a character has no token.
    TokenSequence encode_text(const std::string& text) const;

    std::string decode(const std::vector<int>& ids) const;

    /// Parses the longest numeric literal starting at `start`.
    /// Returns (value, one-past-end) or nullopt when no digit begins there.
    std::optional<std::pair<double, std::size_t>>
    decode_number_span(const std::vector<int>& ids, std::size_t start) const;

    /// True exactly where the label has a numeric value and is not padded.
    /// `pad_mask[i]` true means position i counts. Throws on out-of-range ids.
    std::vector<bool> number_mask(const std::vector<int>& label_ids,
                                  const std::vector<bool>& pad_mask) const;

    /// Line-oriented text format: `token<TAB>value|NONE`, index = line number.
    void save(const std::string& path) const;
    static NumberVocabulary load(const std::string& path);

private:
    NumberVocabulary() = default;

    std::vector<std::string> tokens_;
    std::vector<std::optional<double>> values_;
    std::vector<int> number_indices_;
    std::vector<double> number_values_;
    std::unordered_map<std::string, int> lookup_;
    std::vector<int> slice_of_id_;  // -1 for text tokens
    bool sorted_equidistant_ = true;
};

}  // namespace ntl
