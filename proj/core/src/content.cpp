#include "celltrail/content.hpp"

#include <cmath>

namespace celltrail {

bool content_equal(const CellContent& a, const CellContent& b) {
    if (a.index() != b.index()) return false;
    if (is_number(a)) return bits_equal(std::get<double>(a), std::get<double>(b));
    return a == b;
}

std::optional<std::string> content_violation(const CellContent& c) {
    if (is_number(c) && !std::isfinite(std::get<double>(c)))
        return "number content must be finite";
    if (is_formula(c)) {
        const auto& text = std::get<FormulaSource>(c).text;
        if (text.size() < 2 || text[0] != '=')
            return "formula source must begin with '=' and be non-empty after it";
    }
    return std::nullopt;
}

std::string render_content(const CellContent& c) {
    if (is_empty(c)) return "";
    if (is_number(c)) return render_number(std::get<double>(c));
    if (is_text(c)) return std::get<std::string>(c);
    return std::get<FormulaSource>(c).text;
}

}  // namespace celltrail
