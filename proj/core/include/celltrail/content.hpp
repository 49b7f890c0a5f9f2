#pragma once

#include <optional>
#include <string>
#include <variant>

#include "celltrail/numbers.hpp"

namespace celltrail {

/// Formula source text, beginning with "=".
struct FormulaSource {
    std::string text;

    friend bool operator==(const FormulaSource&, const FormulaSource&) = default;
};

/// What a cell holds: nothing, a finite number, free text, or a formula.
/// The formula/static distinction is load-bearing for audit classification.
using CellContent = std::variant<std::monostate, double, std::string, FormulaSource>;

inline CellContent empty_content() { return std::monostate{}; }
inline CellContent number_content(double v) { return v; }
inline CellContent text_content(std::string s) { return CellContent{std::move(s)}; }
inline CellContent formula_content(std::string source) {
    return FormulaSource{std::move(source)};
}

inline bool is_empty(const CellContent& c) { return std::holds_alternative<std::monostate>(c); }
inline bool is_number(const CellContent& c) { return std::holds_alternative<double>(c); }
inline bool is_text(const CellContent& c) { return std::holds_alternative<std::string>(c); }
inline bool is_formula(const CellContent& c) { return std::holds_alternative<FormulaSource>(c); }

/// Equality with bit-level number comparison (0.0 != -0.0), so that equal
/// contents always serialize to identical text.
bool content_equal(const CellContent& a, const CellContent& b);

/// Empty when the invariants hold; otherwise a description of the violation
/// (formula not starting with "=", non-finite number, ...).
std::optional<std::string> content_violation(const CellContent& c);

/// Human-readable rendering for reports: formula source, canonical number,
/// raw text, or "" for empty.
std::string render_content(const CellContent& c);

/// One grid slot: content plus the value it last evaluated to. The cache is
/// present only for numbers (where it equals the number) and evaluated
/// formulas.
struct Cell {
    CellContent content;
    std::optional<double> cached_value;
};

/// Cache a number's own value; formulas start uncached.
inline std::optional<double> default_cache(const CellContent& c) {
    if (is_number(c)) return std::get<double>(c);
    return std::nullopt;
}

}  // namespace celltrail
