#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include "celltrail/address.hpp"
#include "celltrail/content.hpp"
#include "celltrail/timestamp.hpp"

namespace celltrail {

/// Per-cell content replacement at `target`.
struct ContentChangeKind {
    friend bool operator==(const ContentChangeKind&, const ContentChangeKind&) = default;
};

struct RowInsertKind {
    int index = 1;
    friend bool operator==(const RowInsertKind&, const RowInsertKind&) = default;
};
struct RowDeleteKind {
    int index = 1;
    friend bool operator==(const RowDeleteKind&, const RowDeleteKind&) = default;
};
struct ColInsertKind {
    int index = 1;
    friend bool operator==(const ColInsertKind&, const ColInsertKind&) = default;
};
struct ColDeleteKind {
    int index = 1;
    friend bool operator==(const ColDeleteKind&, const ColDeleteKind&) = default;
};

/// One cell relocated from -> to. `previous` on the record holds whatever the
/// destination was showing before (empty if nothing), `new` holds the moved
/// content, so the record is reversible on both addresses.
struct MoveKind {
    CellAddress from;
    CellAddress to;
    friend bool operator==(const MoveKind&, const MoveKind&) = default;
};

/// Block-operation marker recorded alongside the per-cell moves so the
/// user-level gesture survives in the log. Carries no grid delta of its own.
struct BlockMoveKind {
    CellRange from;
    CellRange to;
    friend bool operator==(const BlockMoveKind&, const BlockMoveKind&) = default;
};

using ChangeKind = std::variant<ContentChangeKind, RowInsertKind, RowDeleteKind, ColInsertKind,
                                ColDeleteKind, MoveKind, BlockMoveKind>;

inline bool is_cell_move(const ChangeKind& k) { return std::holds_alternative<MoveKind>(k); }
inline bool is_content_change(const ChangeKind& k) {
    return std::holds_alternative<ContentChangeKind>(k);
}

/// One tracked mutation. Ids are gapless 1..n per document; timestamps never
/// decrease in id order. `next` is the post-change content (the wire format
/// calls it "new").
struct ChangeRecord {
    std::int64_t id = 0;
    std::string author;
    Timestamp timestamp;
    ChangeKind kind;
    std::string sheet;                  // sheet the change applies to
    std::optional<CellAddress> target;  // set for content changes and moves
    CellContent previous;
    CellContent next;
    std::optional<double> prev_cached_value;
};

}  // namespace celltrail
