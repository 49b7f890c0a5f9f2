#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "celltrail/changes.hpp"
#include "celltrail/errors.hpp"

namespace celltrail {

/// Grid key in row-major order, so map iteration matches serialization order.
using GridPos = std::pair<int, int>;  // (row, col)

inline GridPos grid_pos(const CellAddress& a) { return {a.row, a.col}; }
inline CellAddress grid_addr(const GridPos& p) { return cell_at(p.second, p.first); }

using CellMap = std::map<GridPos, Cell>;

struct SheetData {
    std::string name;
    CellMap cells;  // sparse: only non-empty cells are stored
};

struct DocumentMeta {
    std::string creator;
    Timestamp created;

    friend bool operator==(const DocumentMeta&, const DocumentMeta&) = default;
};

/// Structural edit requests. Move carries the full source region; the
/// ChangeKind stored per record stays cell-to-cell.
struct RowInsertOp {
    int index = 1;
};
struct RowDeleteOp {
    int index = 1;
};
struct ColInsertOp {
    int index = 1;
};
struct ColDeleteOp {
    int index = 1;
};
struct MoveBlockOp {
    CellRange source;
    CellAddress dest_top_left;
};
using StructuralOp =
    std::variant<RowInsertOp, RowDeleteOp, ColInsertOp, ColDeleteOp, MoveBlockOp>;

struct ChainViolation {
    std::int64_t record_id = 0;
    std::string sheet;
    CellAddress cell;
    std::string reason;
};

/// Sheets of cells plus the ordered, append-only change log. Every mutation
/// path appends a record; there is no untracked write once history exists.
class Document {
public:
    /// One empty sheet named "Sheet1", empty log.
    Document();
    explicit Document(std::string first_sheet_name);

    /// Deserialization/reconstruction entry point: assembles a document from
    /// already-validated parts. Checks sheet-name uniqueness and record-id
    /// sequencing; full chain consistency is the caller's concern.
    static Document from_parts(DocumentMeta meta, std::vector<SheetData> sheets,
                               std::vector<ChangeRecord> changes, bool read_only = false);

    // --- queries ---------------------------------------------------------
    const DocumentMeta& meta() const { return meta_; }
    std::size_t sheet_count() const { return sheets_.size(); }
    const SheetData& sheet(std::size_t index) const;
    const std::vector<SheetData>& sheets() const { return sheets_; }
    std::optional<std::size_t> find_sheet(std::string_view name) const;

    const Cell* find_cell(const CellAddress& addr, std::size_t sheet = 0) const;
    /// Empty content for absent cells.
    const CellContent& content_at(const CellAddress& addr, std::size_t sheet = 0) const;
    std::optional<double> cached_value_at(const CellAddress& addr, std::size_t sheet = 0) const;

    const std::vector<ChangeRecord>& changes() const { return changes_; }
    std::int64_t last_change_id() const {
        return changes_.empty() ? 0 : changes_.back().id;
    }
    Timestamp last_change_timestamp() const {
        return changes_.empty() ? Timestamp{} : changes_.back().timestamp;
    }
    bool read_only() const { return read_only_; }

    // --- construction (before history starts) ----------------------------
    void set_meta(DocumentMeta meta) { meta_ = std::move(meta); }
    /// Adds an empty sheet. Names must be unique, non-empty, and dot-free
    /// (dots separate sheet and cell in serialized addresses).
    std::size_t add_sheet(std::string name);
    /// Direct write for builders and generators. Only legal while the change
    /// log is empty; afterwards all writes go through set_cell.
    void set_base_cell(const CellAddress& addr, CellContent content, std::size_t sheet = 0);

    // --- tracked mutation -------------------------------------------------
    /// Replaces the cell content and appends a ContentChange record.
    /// Throws NoChange if the content is identical, TimestampRegression if
    /// the clock runs backwards.
    const ChangeRecord& set_cell(const CellAddress& addr, CellContent content,
                                 const std::string& author, Timestamp timestamp,
                                 std::size_t sheet = 0);

    /// Row/column insert/delete or block move. Appends one structural marker
    /// record plus one record per affected cell, each an independently
    /// replayable delta. Returns the appended records.
    std::span<const ChangeRecord> structural_edit(const StructuralOp& op,
                                                  const std::string& author, Timestamp timestamp,
                                                  std::size_t sheet = 0);

    /// Stores a freshly evaluated value. Derived-state maintenance for the
    /// recalculation engine; never appends a record.
    void store_cached_value(const CellAddress& addr, std::optional<double> value,
                            std::size_t sheet = 0);

    // --- integrity --------------------------------------------------------
    /// Walks the log backwards from the current grid checking that every
    /// record links up (each `new` matches the state it claims to produce).
    /// Empty result means the audit trail is intact.
    std::vector<ChainViolation> verify_chain() const;

    /// Content-only comparison (sheet names + cell contents), ignoring
    /// caches, logs and metadata.
    bool grid_equals(const Document& other) const;

    /// Full structural equality, used by round-trip tests.
    friend bool operator==(const Document& a, const Document& b);

    // --- replay primitives (shared by audit reconstruction) ---------------
    /// Applies one record's grid delta to a cell map (markers are no-ops).
    static void apply_record(CellMap& cells, const ChangeRecord& rec);
    /// Undoes one record's grid delta, restoring recorded prior content and
    /// cache.
    static void reverse_record(CellMap& cells, const ChangeRecord& rec);

private:
    void ensure_writable() const;
    void ensure_timestamp(Timestamp t) const;
    SheetData& sheet_ref(std::size_t index);
    const ChangeRecord& append_record(ChangeRecord rec);
    /// Captures state, appends the record, applies the delta. `previous` and
    /// prev_cached_value are read from the grid at call time, which keeps
    /// multi-record batches sequentially consistent.
    void record_move(SheetData& s, const std::string& author, Timestamp ts, CellAddress from,
                     CellAddress to);
    void record_clear(SheetData& s, const std::string& author, Timestamp ts, CellAddress at);

    DocumentMeta meta_;
    std::vector<SheetData> sheets_;
    std::vector<ChangeRecord> changes_;
    bool read_only_ = false;
};

}  // namespace celltrail
