#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace celltrail {

/// A1-style cell address. Column and row are 1-based; the abs flags carry the
/// "$" markers ("$E$3" pins both axes). Grid placement ignores the flags;
/// they matter to formula text only.
struct CellAddress {
    int col = 1;
    int row = 1;
    bool col_abs = false;
    bool row_abs = false;

    friend bool operator==(const CellAddress&, const CellAddress&) = default;

    /// Same grid position, ignoring abs markers.
    bool same_cell(const CellAddress& o) const { return col == o.col && row == o.row; }

    /// Copy with both abs markers cleared.
    CellAddress plain() const { return CellAddress{col, row, false, false}; }
};

inline CellAddress cell_at(int col, int row) { return CellAddress{col, row, false, false}; }

/// Rectangular block, normalized so start.col <= end.col and
/// start.row <= end.row.
struct CellRange {
    CellAddress start;
    CellAddress end;

    friend bool operator==(const CellRange&, const CellRange&) = default;

    int width() const { return end.col - start.col + 1; }
    int height() const { return end.row - start.row + 1; }
    bool contains(const CellAddress& a) const {
        return a.col >= start.col && a.col <= end.col && a.row >= start.row && a.row <= end.row;
    }
};

/// Swaps endpoints per axis as needed; abs markers travel with the
/// coordinate they annotate.
CellRange normalize_range(CellAddress a, CellAddress b);

/// 1 -> "A", 26 -> "Z", 27 -> "AA" (bijective base 26).
std::string column_letters(int col);
std::optional<int> parse_column_letters(std::string_view text);

std::string render_address(const CellAddress& a);
std::string render_range(const CellRange& r);

/// Parses "A1", "$E$3", "AA10". The whole input must be consumed.
std::optional<CellAddress> parse_address(std::string_view text);
/// Parses "A1:B2" (also accepts a single address as a 1x1 range).
std::optional<CellRange> parse_range(std::string_view text);

}  // namespace celltrail
