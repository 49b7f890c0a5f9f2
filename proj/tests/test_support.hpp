#pragma once

// Shared fixtures and randomized generators for the test suites.

#include <cmath>
#include <cstdint>
#include <iterator>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "celltrail/container_io.hpp"
#include "celltrail/document.hpp"
#include "celltrail/eval.hpp"

namespace test_support {

using namespace celltrail;

// ---------------------------------------------------------------------------
// The marks fixture: 50 tracked edits with known composition, built for the
// classification/filter/discrepancy suites. Exactly 7 formula-to-value
// replacements, of which exactly 3 disagree with the replaced formula's
// value (deltas 91, 4, -20). Replaced formulas depend only on row-10
// constants that stay untouched until after the replacements, so cached and
// strict discrepancy checks agree on the same 3 records.
// ---------------------------------------------------------------------------

struct Fixture {
    Document doc;
    Document base;  // snapshot before any tracked edit
    // (last record id after each edit call, snapshot taken at that point)
    std::vector<std::pair<std::int64_t, Document>> snapshots;
};

inline Fixture build_marks_fixture() {
    Document doc;
    doc.set_meta({"fixture", Timestamp{0}});

    doc.set_base_cell(cell_at(1, 1), number_content(1.5));   // A1
    doc.set_base_cell(cell_at(1, 2), number_content(2.5));   // A2
    doc.set_base_cell(cell_at(4, 1), text_content("marks")); // D1

    // Constant inputs for the formulas that will be replaced.
    const double inputs[] = {1, 2, 3, 4, 5};
    for (int i = 0; i < 5; ++i)
        doc.set_base_cell(cell_at(1 + i, 10), number_content(inputs[i]));  // A10..E10

    const char* formulas[] = {
        "=A10+1",        // F1 -> 2
        "=B10*2",        // F2 -> 4
        "=SUM(A10:C10)", // F3 -> 6
        "=D10^2",        // F4 -> 16
        "=MAX(A10;E10)", // F5 -> 5
        "=C10*20+2",     // F6 -> 62
        "=B10",          // F7 -> 2
    };
    for (int i = 0; i < 7; ++i)
        doc.set_base_cell(cell_at(6, 1 + i), formula_content(formulas[i]));  // F1..F7
    recalculate(doc);

    Fixture fx;
    fx.base = doc;

    const char* authors[] = {"alice", "bob", "carol"};
    int call = 0;
    auto author = [&] { return std::string(authors[call % 3]); };
    auto stamp = [&] { return Timestamp{1000 + call}; };
    auto snap = [&] { fx.snapshots.emplace_back(doc.last_change_id(), doc); };

    auto set = [&](int col, int row, CellContent content) {
        ++call;
        doc.set_cell(cell_at(col, row), std::move(content), author(), stamp());
        snap();
    };
    auto structural = [&](const StructuralOp& op) {
        ++call;
        doc.structural_edit(op, author(), stamp());
        snap();
    };

    // 7 formula-to-value replacements (records 1..7); honest except 2, 4, 6.
    const double entered[] = {2.0, 95.0, 6.0, 20.0, 5.0, 42.0, 2.0};
    for (int i = 0; i < 7; ++i) set(6, 1 + i, number_content(entered[i]));

    // 10 entries into E1..E10 (records 8..17).
    for (int i = 0; i < 10; ++i) set(5, 1 + i, number_content(10.0 * (i + 1)));

    // 5 value edits of the row-10 constants (records 18..22).
    for (int i = 0; i < 5; ++i) set(1 + i, 10, number_content(11.0 + i));

    // 4 value-to-formula (records 23..26).
    set(5, 1, formula_content("=A10"));
    set(5, 2, formula_content("=B10+1"));
    set(5, 3, formula_content("=C10*2"));
    set(5, 4, formula_content("=D10"));

    // 3 formula edits (records 27..29).
    set(5, 1, formula_content("=A10+1"));
    set(5, 2, formula_content("=B10+2"));
    set(5, 3, formula_content("=C10*3"));

    // 3 clears (records 30..32).
    for (int r = 8; r <= 10; ++r) set(5, r, empty_content());

    // 3 structural markers on empty territory (records 33..35).
    structural(RowInsertOp{20});
    structural(ColInsertOp{9});
    structural(RowDeleteOp{19});

    // Block move there and back: 2 markers + 4 per-cell moves (36..41).
    structural(MoveBlockOp{CellRange{cell_at(1, 1), cell_at(1, 2)}, cell_at(8, 5)});
    structural(MoveBlockOp{CellRange{cell_at(8, 5), cell_at(8, 6)}, cell_at(1, 1)});

    // 9 more entries into G1..G9 (records 42..50).
    for (int i = 0; i < 9; ++i) set(7, 1 + i, number_content(100.0 + i));

    fx.doc = std::move(doc);
    return fx;
}

// ---------------------------------------------------------------------------
// Randomized documents and edit sequences.
// ---------------------------------------------------------------------------

inline double random_value(std::mt19937_64& rng) {
    static const double pool[] = {0.0,
                                  -0.0,
                                  1.0,
                                  -1.5,
                                  42.0,
                                  5e-324,                    // smallest denormal
                                  2.2250738585072014e-308,   // smallest normal
                                  1.7976931348623157e308,    // largest finite
                                  -9.875e-12,
                                  3.141592653589793};
    std::uniform_int_distribution<int> kind(0, 3);
    switch (kind(rng)) {
        case 0:
            return pool[std::uniform_int_distribution<std::size_t>(0, std::size(pool) - 1)(rng)];
        case 1:
            return std::uniform_real_distribution<double>(-1e6, 1e6)(rng);
        case 2:
            return static_cast<double>(std::uniform_int_distribution<int>(-1000, 1000)(rng));
        default: {
            // Random finite bit pattern.
            for (;;) {
                const std::uint64_t bits = rng();
                double v;
                static_assert(sizeof(v) == sizeof(bits));
                __builtin_memcpy(&v, &bits, sizeof(v));
                if (std::isfinite(v)) return v;
            }
        }
    }
}

inline CellContent random_content(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> kind(0, 9);
    const int k = kind(rng);
    if (k < 5) return number_content(random_value(rng));
    if (k < 7) {
        static const char* texts[] = {"alice",  "b,c",    "he said \"hi\"", "line\nbreak",
                                      "<tag&>", "héllo ✓", "  spaced  ",    "0"};
        return text_content(texts[std::uniform_int_distribution<std::size_t>(
            0, std::size(texts) - 1)(rng)]);
    }
    if (k < 9) {
        static const char* formulas[] = {"=A1+1",        "=SUM(A1:B3)", "=SIN(B2)*2",
                                         "=MAX(1;A2;3)", "=B1^2-0.5",   "=EXP(0)"};
        return formula_content(formulas[std::uniform_int_distribution<std::size_t>(
            0, std::size(formulas) - 1)(rng)]);
    }
    return empty_content();
}

inline CellAddress random_addr(std::mt19937_64& rng, int max_col = 8, int max_row = 8) {
    return cell_at(std::uniform_int_distribution<int>(1, max_col)(rng),
                   std::uniform_int_distribution<int>(1, max_row)(rng));
}

/// Base document with random cells (no change log yet).
inline Document random_base_document(std::mt19937_64& rng, int cells = 20) {
    Document doc;
    doc.set_meta({"gen", Timestamp{std::uniform_int_distribution<std::int64_t>(
                             0, 4'000'000'000)(rng)}});
    for (int i = 0; i < cells; ++i) {
        const CellAddress addr = random_addr(rng);
        CellContent content = random_content(rng);
        if (is_empty(content)) continue;
        doc.set_base_cell(addr, std::move(content));
    }
    return doc;
}

/// One random tracked edit; returns false if the roll was a no-op (content
/// collision or overlapping move) and nothing was appended.
inline bool random_edit(Document& doc, std::mt19937_64& rng, Timestamp ts) {
    std::uniform_int_distribution<int> kind(0, 9);
    const int k = kind(rng);
    const char* authors[] = {"alice", "bob", "carol"};
    const std::string author = authors[std::uniform_int_distribution<int>(0, 2)(rng)];
    if (k < 7) {
        const CellAddress addr = random_addr(rng);
        CellContent content = random_content(rng);
        if (content_equal(doc.content_at(addr), content)) return false;
        doc.set_cell(addr, std::move(content), author, ts);
        return true;
    }
    if (k == 7) {
        const int index = std::uniform_int_distribution<int>(1, 8)(rng);
        const bool row = std::uniform_int_distribution<int>(0, 1)(rng);
        const bool insert = std::uniform_int_distribution<int>(0, 1)(rng);
        StructuralOp op = row ? (insert ? StructuralOp{RowInsertOp{index}}
                                        : StructuralOp{RowDeleteOp{index}})
                              : (insert ? StructuralOp{ColInsertOp{index}}
                                        : StructuralOp{ColDeleteOp{index}});
        doc.structural_edit(op, author, ts);
        return true;
    }
    // Block move with a non-overlapping destination.
    const int w = std::uniform_int_distribution<int>(1, 3)(rng);
    const int h = std::uniform_int_distribution<int>(1, 3)(rng);
    const CellAddress src = random_addr(rng, 6, 6);
    const CellRange source{src, cell_at(src.col + w - 1, src.row + h - 1)};
    const CellAddress dst = cell_at(src.col + w + std::uniform_int_distribution<int>(0, 3)(rng),
                                    std::uniform_int_distribution<int>(1, 10)(rng));
    try {
        doc.structural_edit(MoveBlockOp{source, dst}, author, ts);
    } catch (const ContainerError&) {
        return false;  // overlap roll; skip
    }
    return true;
}

/// Document with a random base and `edits` tracked edits.
inline Document random_tracked_document(std::mt19937_64& rng, int edits) {
    Document doc = random_base_document(rng);
    std::int64_t clock = 1000;
    int done = 0;
    while (done < edits) {
        clock += std::uniform_int_distribution<int>(0, 3)(rng);
        if (random_edit(doc, rng, Timestamp{clock})) ++done;
    }
    return doc;
}

}  // namespace test_support
