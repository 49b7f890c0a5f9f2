#include "celltrail/address.hpp"

#include <algorithm>
#include <cctype>

namespace celltrail {

CellRange normalize_range(CellAddress a, CellAddress b) {
    if (a.col > b.col) {
        std::swap(a.col, b.col);
        std::swap(a.col_abs, b.col_abs);
    }
    if (a.row > b.row) {
        std::swap(a.row, b.row);
        std::swap(a.row_abs, b.row_abs);
    }
    return CellRange{a, b};
}

std::string column_letters(int col) {
    std::string out;
    while (col > 0) {
        col -= 1;
        out.push_back(static_cast<char>('A' + col % 26));
        col /= 26;
    }
    std::reverse(out.begin(), out.end());
    return out;
}

std::optional<int> parse_column_letters(std::string_view text) {
    if (text.empty()) return std::nullopt;
    long long col = 0;
    for (char c : text) {
        if (c < 'A' || c > 'Z') return std::nullopt;
        col = col * 26 + (c - 'A' + 1);
        if (col > 1'000'000) return std::nullopt;  // far past any real sheet
    }
    return static_cast<int>(col);
}

std::string render_address(const CellAddress& a) {
    std::string out;
    if (a.col_abs) out.push_back('$');
    out += column_letters(a.col);
    if (a.row_abs) out.push_back('$');
    out += std::to_string(a.row);
    return out;
}

std::string render_range(const CellRange& r) {
    return render_address(r.start) + ":" + render_address(r.end);
}

namespace {

// Consumes one address from the front of `text`, advancing `pos`.
std::optional<CellAddress> parse_address_prefix(std::string_view text, std::size_t& pos) {
    CellAddress a;
    if (pos < text.size() && text[pos] == '$') {
        a.col_abs = true;
        ++pos;
    }
    std::size_t letters_begin = pos;
    while (pos < text.size() && text[pos] >= 'A' && text[pos] <= 'Z') ++pos;
    if (pos == letters_begin) return std::nullopt;
    const auto col = parse_column_letters(text.substr(letters_begin, pos - letters_begin));
    if (!col) return std::nullopt;
    a.col = *col;
    if (pos < text.size() && text[pos] == '$') {
        a.row_abs = true;
        ++pos;
    }
    std::size_t digits_begin = pos;
    long long row = 0;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
        row = row * 10 + (text[pos] - '0');
        if (row > 100'000'000) return std::nullopt;
        ++pos;
    }
    if (pos == digits_begin || row < 1) return std::nullopt;
    a.row = static_cast<int>(row);
    return a;
}

}  // namespace

std::optional<CellAddress> parse_address(std::string_view text) {
    std::size_t pos = 0;
    const auto a = parse_address_prefix(text, pos);
    if (!a || pos != text.size()) return std::nullopt;
    return a;
}

std::optional<CellRange> parse_range(std::string_view text) {
    std::size_t pos = 0;
    const auto a = parse_address_prefix(text, pos);
    if (!a) return std::nullopt;
    if (pos == text.size()) return CellRange{*a, *a};
    if (text[pos] != ':') return std::nullopt;
    ++pos;
    const auto b = parse_address_prefix(text, pos);
    if (!b || pos != text.size()) return std::nullopt;
    return normalize_range(*a, *b);
}

}  // namespace celltrail
