#include "celltrail/document.hpp"

#include <algorithm>

namespace celltrail {

namespace {

const CellContent kEmpty = std::monostate{};

void validate_sheet_name(const std::string& name) {
    if (name.empty())
        throw ContainerError(ContainerErrc::InvariantViolation, "sheet name must be non-empty");
    if (name.find('.') != std::string::npos)
        throw ContainerError(ContainerErrc::InvariantViolation,
                             "sheet name must not contain '.' (reserved as address separator): " +
                                 name);
}

void write_cell(CellMap& cells, const GridPos& pos, CellContent content,
                std::optional<double> cached) {
    if (is_empty(content)) {
        cells.erase(pos);
    } else {
        cells[pos] = Cell{std::move(content), cached};
    }
}

}  // namespace

Document::Document() : Document("Sheet1") {}

Document::Document(std::string first_sheet_name) {
    validate_sheet_name(first_sheet_name);
    sheets_.push_back(SheetData{std::move(first_sheet_name), {}});
}

Document Document::from_parts(DocumentMeta meta, std::vector<SheetData> sheets,
                              std::vector<ChangeRecord> changes, bool read_only) {
    if (sheets.empty())
        throw ContainerError(ContainerErrc::InvariantViolation, "document needs at least one sheet");
    for (std::size_t i = 0; i < sheets.size(); ++i) {
        validate_sheet_name(sheets[i].name);
        for (std::size_t j = i + 1; j < sheets.size(); ++j)
            if (sheets[i].name == sheets[j].name)
                throw ContainerError(ContainerErrc::InvariantViolation,
                                     "duplicate sheet name: " + sheets[i].name);
    }
    for (std::size_t i = 0; i < changes.size(); ++i) {
        const auto& r = changes[i];
        if (r.id != static_cast<std::int64_t>(i) + 1)
            throw ContainerError(ContainerErrc::InvalidRecord, "gap in id sequence", "", 0, r.id);
        if (i > 0 && r.timestamp < changes[i - 1].timestamp)
            throw ContainerError(ContainerErrc::InvalidRecord, "timestamp regression", "", 0,
                                 r.id);
    }
    Document doc(sheets.front().name);
    doc.meta_ = std::move(meta);
    doc.sheets_ = std::move(sheets);
    doc.changes_ = std::move(changes);
    doc.read_only_ = read_only;
    return doc;
}

const SheetData& Document::sheet(std::size_t index) const {
    if (index >= sheets_.size())
        throw ContainerError(ContainerErrc::UnknownSheet,
                             "sheet index out of range: " + std::to_string(index));
    return sheets_[index];
}

std::optional<std::size_t> Document::find_sheet(std::string_view name) const {
    for (std::size_t i = 0; i < sheets_.size(); ++i)
        if (sheets_[i].name == name) return i;
    return std::nullopt;
}

const Cell* Document::find_cell(const CellAddress& addr, std::size_t sheet_index) const {
    const auto& s = sheet(sheet_index);
    const auto it = s.cells.find(grid_pos(addr));
    return it == s.cells.end() ? nullptr : &it->second;
}

const CellContent& Document::content_at(const CellAddress& addr, std::size_t sheet_index) const {
    const Cell* c = find_cell(addr, sheet_index);
    return c ? c->content : kEmpty;
}

std::optional<double> Document::cached_value_at(const CellAddress& addr,
                                                std::size_t sheet_index) const {
    const Cell* c = find_cell(addr, sheet_index);
    return c ? c->cached_value : std::nullopt;
}

std::size_t Document::add_sheet(std::string name) {
    ensure_writable();
    validate_sheet_name(name);
    if (find_sheet(name))
        throw ContainerError(ContainerErrc::InvariantViolation, "duplicate sheet name: " + name);
    sheets_.push_back(SheetData{std::move(name), {}});
    return sheets_.size() - 1;
}

void Document::set_base_cell(const CellAddress& addr, CellContent content,
                             std::size_t sheet_index) {
    ensure_writable();
    if (!changes_.empty())
        throw ContainerError(ContainerErrc::InvariantViolation,
                             "base writes are only allowed before the change log starts");
    if (addr.col < 1 || addr.row < 1)
        throw ContainerError(ContainerErrc::OutOfBounds, "cell address out of bounds");
    if (const auto why = content_violation(content))
        throw ContainerError(ContainerErrc::InvariantViolation, *why);
    auto& s = sheet_ref(sheet_index);
    write_cell(s.cells, grid_pos(addr), std::move(content), std::nullopt);
    if (auto it = s.cells.find(grid_pos(addr)); it != s.cells.end())
        it->second.cached_value = default_cache(it->second.content);
}

void Document::ensure_writable() const {
    if (read_only_)
        throw ContainerError(ContainerErrc::ReadOnly,
                             "document is a read-only historical reconstruction");
}

void Document::ensure_timestamp(Timestamp t) const {
    if (!changes_.empty() && t < changes_.back().timestamp)
        throw ContainerError(ContainerErrc::TimestampRegression,
                             "timestamp precedes the last recorded change");
}

SheetData& Document::sheet_ref(std::size_t index) {
    if (index >= sheets_.size())
        throw ContainerError(ContainerErrc::UnknownSheet,
                             "sheet index out of range: " + std::to_string(index));
    return sheets_[index];
}

const ChangeRecord& Document::append_record(ChangeRecord rec) {
    rec.id = last_change_id() + 1;
    changes_.push_back(std::move(rec));
    return changes_.back();
}

const ChangeRecord& Document::set_cell(const CellAddress& addr, CellContent content,
                                       const std::string& author, Timestamp timestamp,
                                       std::size_t sheet_index) {
    ensure_writable();
    ensure_timestamp(timestamp);
    if (addr.col < 1 || addr.row < 1)
        throw ContainerError(ContainerErrc::OutOfBounds, "cell address out of bounds");
    if (const auto why = content_violation(content))
        throw ContainerError(ContainerErrc::InvariantViolation, *why);
    auto& s = sheet_ref(sheet_index);
    const GridPos pos = grid_pos(addr);
    const auto it = s.cells.find(pos);
    const CellContent& current = it == s.cells.end() ? kEmpty : it->second.content;
    if (content_equal(current, content))
        throw ContainerError(ContainerErrc::NoChange,
                             "cell already holds this content: " + render_address(addr));

    ChangeRecord rec;
    rec.author = author;
    rec.timestamp = timestamp;
    rec.kind = ContentChangeKind{};
    rec.sheet = s.name;
    rec.target = addr.plain();
    rec.previous = current;
    rec.next = content;
    rec.prev_cached_value = it == s.cells.end() ? std::nullopt : it->second.cached_value;

    write_cell(s.cells, pos, std::move(content), std::nullopt);
    if (auto wit = s.cells.find(pos); wit != s.cells.end())
        wit->second.cached_value = default_cache(wit->second.content);
    return append_record(std::move(rec));
}

void Document::record_move(SheetData& s, const std::string& author, Timestamp ts,
                           CellAddress from, CellAddress to) {
    const auto from_it = s.cells.find(grid_pos(from));
    const auto to_it = s.cells.find(grid_pos(to));
    const bool from_occupied = from_it != s.cells.end();
    const bool to_occupied = to_it != s.cells.end();
    if (!from_occupied && !to_occupied) return;  // nothing observable happens

    ChangeRecord rec;
    rec.author = author;
    rec.timestamp = ts;
    rec.kind = MoveKind{from.plain(), to.plain()};
    rec.sheet = s.name;
    rec.target = to.plain();
    rec.previous = to_occupied ? to_it->second.content : kEmpty;
    rec.next = from_occupied ? from_it->second.content : kEmpty;
    rec.prev_cached_value = to_occupied ? to_it->second.cached_value : std::nullopt;

    // The live move carries the evaluated cache along with the cell.
    std::optional<double> moved_cache =
        from_occupied ? from_it->second.cached_value : std::nullopt;
    if (from_occupied) s.cells.erase(from_it);
    write_cell(s.cells, grid_pos(to), rec.next, moved_cache);
    append_record(std::move(rec));
}

void Document::record_clear(SheetData& s, const std::string& author, Timestamp ts,
                            CellAddress at) {
    const auto it = s.cells.find(grid_pos(at));
    if (it == s.cells.end()) return;

    ChangeRecord rec;
    rec.author = author;
    rec.timestamp = ts;
    rec.kind = ContentChangeKind{};
    rec.sheet = s.name;
    rec.target = at.plain();
    rec.previous = it->second.content;
    rec.next = kEmpty;
    rec.prev_cached_value = it->second.cached_value;

    s.cells.erase(it);
    append_record(std::move(rec));
}

std::span<const ChangeRecord> Document::structural_edit(const StructuralOp& op,
                                                        const std::string& author,
                                                        Timestamp timestamp,
                                                        std::size_t sheet_index) {
    ensure_writable();
    ensure_timestamp(timestamp);
    auto& s = sheet_ref(sheet_index);
    const std::size_t first_new = changes_.size();

    ChangeRecord marker;
    marker.author = author;
    marker.timestamp = timestamp;
    marker.sheet = s.name;

    if (const auto* ri = std::get_if<RowInsertOp>(&op)) {
        if (ri->index < 1) throw ContainerError(ContainerErrc::OutOfBounds, "row index must be >= 1");
        marker.kind = RowInsertKind{ri->index};
        append_record(std::move(marker));
        // Shift down, bottom row first so each destination is already vacant.
        std::vector<GridPos> affected;
        for (const auto& [pos, cell] : s.cells)
            if (pos.first >= ri->index) affected.push_back(pos);
        std::reverse(affected.begin(), affected.end());
        for (const auto& pos : affected)
            record_move(s, author, timestamp, grid_addr(pos),
                        cell_at(pos.second, pos.first + 1));
    } else if (const auto* rd = std::get_if<RowDeleteOp>(&op)) {
        if (rd->index < 1) throw ContainerError(ContainerErrc::OutOfBounds, "row index must be >= 1");
        marker.kind = RowDeleteKind{rd->index};
        append_record(std::move(marker));
        std::vector<GridPos> doomed, shifted;
        for (const auto& [pos, cell] : s.cells) {
            if (pos.first == rd->index) doomed.push_back(pos);
            if (pos.first > rd->index) shifted.push_back(pos);
        }
        for (const auto& pos : doomed) record_clear(s, author, timestamp, grid_addr(pos));
        // Shift up, top row first: the row above was just vacated.
        for (const auto& pos : shifted)
            record_move(s, author, timestamp, grid_addr(pos),
                        cell_at(pos.second, pos.first - 1));
    } else if (const auto* ci = std::get_if<ColInsertOp>(&op)) {
        if (ci->index < 1)
            throw ContainerError(ContainerErrc::OutOfBounds, "column index must be >= 1");
        marker.kind = ColInsertKind{ci->index};
        append_record(std::move(marker));
        // Shift right, rightmost column first.
        std::vector<GridPos> affected;
        for (const auto& [pos, cell] : s.cells)
            if (pos.second >= ci->index) affected.push_back(pos);
        std::sort(affected.begin(), affected.end(), [](const GridPos& a, const GridPos& b) {
            return a.second != b.second ? a.second > b.second : a.first < b.first;
        });
        for (const auto& pos : affected)
            record_move(s, author, timestamp, grid_addr(pos),
                        cell_at(pos.second + 1, pos.first));
    } else if (const auto* cd = std::get_if<ColDeleteOp>(&op)) {
        if (cd->index < 1)
            throw ContainerError(ContainerErrc::OutOfBounds, "column index must be >= 1");
        marker.kind = ColDeleteKind{cd->index};
        append_record(std::move(marker));
        std::vector<GridPos> doomed, shifted;
        for (const auto& [pos, cell] : s.cells) {
            if (pos.second == cd->index) doomed.push_back(pos);
            if (pos.second > cd->index) shifted.push_back(pos);
        }
        for (const auto& pos : doomed) record_clear(s, author, timestamp, grid_addr(pos));
        std::sort(shifted.begin(), shifted.end(), [](const GridPos& a, const GridPos& b) {
            return a.second != b.second ? a.second < b.second : a.first < b.first;
        });
        for (const auto& pos : shifted)
            record_move(s, author, timestamp, grid_addr(pos),
                        cell_at(pos.second - 1, pos.first));
    } else {
        const auto& mv = std::get<MoveBlockOp>(op);
        const CellRange src = mv.source;
        if (src.start.col < 1 || src.start.row < 1 || mv.dest_top_left.col < 1 ||
            mv.dest_top_left.row < 1)
            throw ContainerError(ContainerErrc::OutOfBounds, "move region out of bounds");
        const int dc = mv.dest_top_left.col - src.start.col;
        const int dr = mv.dest_top_left.row - src.start.row;
        if (dc == 0 && dr == 0)
            throw ContainerError(ContainerErrc::RegionOverlap, "move source equals destination");
        const CellRange dst{mv.dest_top_left.plain(),
                            cell_at(mv.dest_top_left.col + src.width() - 1,
                                    mv.dest_top_left.row + src.height() - 1)};
        // Overlapping self-moves cannot be decomposed into independently
        // replayable per-cell records; reject them.
        const bool overlap = !(dst.end.col < src.start.col || src.end.col < dst.start.col ||
                               dst.end.row < src.start.row || src.end.row < dst.start.row);
        if (overlap)
            throw ContainerError(ContainerErrc::RegionOverlap,
                                 "move source and destination regions overlap");
        marker.kind = BlockMoveKind{CellRange{src.start.plain(), src.end.plain()}, dst};
        append_record(std::move(marker));
        for (int r = src.start.row; r <= src.end.row; ++r)
            for (int c = src.start.col; c <= src.end.col; ++c)
                record_move(s, author, timestamp, cell_at(c, r), cell_at(c + dc, r + dr));
    }

    return std::span<const ChangeRecord>(changes_).subspan(first_new);
}

void Document::store_cached_value(const CellAddress& addr, std::optional<double> value,
                                  std::size_t sheet_index) {
    auto& s = sheet_ref(sheet_index);
    const auto it = s.cells.find(grid_pos(addr));
    if (it == s.cells.end()) return;
    if (is_number(it->second.content)) return;  // a number is its own cache
    if (is_text(it->second.content)) return;
    it->second.cached_value = value;
}

void Document::apply_record(CellMap& cells, const ChangeRecord& rec) {
    if (const auto* mv = std::get_if<MoveKind>(&rec.kind)) {
        cells.erase(grid_pos(mv->from));
        write_cell(cells, grid_pos(mv->to), rec.next, default_cache(rec.next));
        return;
    }
    if (is_content_change(rec.kind)) {
        write_cell(cells, grid_pos(*rec.target), rec.next, default_cache(rec.next));
        return;
    }
    // Structural markers carry no grid delta of their own.
}

void Document::reverse_record(CellMap& cells, const ChangeRecord& rec) {
    if (const auto* mv = std::get_if<MoveKind>(&rec.kind)) {
        write_cell(cells, grid_pos(mv->from), rec.next, default_cache(rec.next));
        write_cell(cells, grid_pos(mv->to), rec.previous, rec.prev_cached_value);
        return;
    }
    if (is_content_change(rec.kind)) {
        write_cell(cells, grid_pos(*rec.target), rec.previous, rec.prev_cached_value);
        return;
    }
}

std::vector<ChainViolation> Document::verify_chain() const {
    std::vector<ChainViolation> out;
    // Expected content per (sheet, pos), seeded from the current grid and
    // rolled back record by record.
    std::map<std::pair<std::string, GridPos>, CellContent> expected;
    for (const auto& s : sheets_)
        for (const auto& [pos, cell] : s.cells) expected[{s.name, pos}] = cell.content;

    auto state_of = [&](const std::string& sheet, const GridPos& pos) -> CellContent {
        const auto it = expected.find({sheet, pos});
        return it == expected.end() ? kEmpty : it->second;
    };
    auto set_state = [&](const std::string& sheet, const GridPos& pos, const CellContent& c) {
        if (is_empty(c))
            expected.erase({sheet, pos});
        else
            expected[{sheet, pos}] = c;
    };

    for (auto it = changes_.rbegin(); it != changes_.rend(); ++it) {
        const ChangeRecord& rec = *it;
        if (const auto* mv = std::get_if<MoveKind>(&rec.kind)) {
            if (!content_equal(state_of(rec.sheet, grid_pos(mv->to)), rec.next))
                out.push_back({rec.id, rec.sheet, mv->to,
                               "moved content does not match later state at destination"});
            if (!is_empty(state_of(rec.sheet, grid_pos(mv->from))))
                out.push_back({rec.id, rec.sheet, mv->from,
                               "move source is not vacated in later state"});
            set_state(rec.sheet, grid_pos(mv->to), rec.previous);
            set_state(rec.sheet, grid_pos(mv->from), rec.next);
        } else if (is_content_change(rec.kind)) {
            const GridPos pos = grid_pos(*rec.target);
            if (!content_equal(state_of(rec.sheet, pos), rec.next))
                out.push_back({rec.id, rec.sheet, *rec.target,
                               "`new` content does not match the state this record produces"});
            set_state(rec.sheet, pos, rec.previous);
        }
    }
    std::reverse(out.begin(), out.end());  // report in ascending record order
    return out;
}

bool Document::grid_equals(const Document& other) const {
    if (sheets_.size() != other.sheets_.size()) return false;
    for (std::size_t i = 0; i < sheets_.size(); ++i) {
        const auto& a = sheets_[i];
        const auto& b = other.sheets_[i];
        if (a.name != b.name || a.cells.size() != b.cells.size()) return false;
        auto bi = b.cells.begin();
        for (const auto& [pos, cell] : a.cells) {
            if (bi->first != pos || !content_equal(cell.content, bi->second.content))
                return false;
            ++bi;
        }
    }
    return true;
}

bool operator==(const Document& a, const Document& b) {
    if (!(a.meta_ == b.meta_) || a.read_only_ != b.read_only_) return false;
    if (a.sheets_.size() != b.sheets_.size() || a.changes_.size() != b.changes_.size())
        return false;
    for (std::size_t i = 0; i < a.sheets_.size(); ++i) {
        const auto& sa = a.sheets_[i];
        const auto& sb = b.sheets_[i];
        if (sa.name != sb.name || sa.cells.size() != sb.cells.size()) return false;
        auto ib = sb.cells.begin();
        for (const auto& [pos, cell] : sa.cells) {
            if (ib->first != pos || !content_equal(cell.content, ib->second.content))
                return false;
            const auto& cb = ib->second.cached_value;
            if (cell.cached_value.has_value() != cb.has_value()) return false;
            if (cell.cached_value && !bits_equal(*cell.cached_value, *cb)) return false;
            ++ib;
        }
    }
    for (std::size_t i = 0; i < a.changes_.size(); ++i) {
        const auto& ra = a.changes_[i];
        const auto& rb = b.changes_[i];
        if (ra.id != rb.id || ra.author != rb.author || ra.timestamp != rb.timestamp ||
            ra.sheet != rb.sheet || ra.target != rb.target || !(ra.kind == rb.kind) ||
            !content_equal(ra.previous, rb.previous) || !content_equal(ra.next, rb.next))
            return false;
        if (ra.prev_cached_value.has_value() != rb.prev_cached_value.has_value()) return false;
        if (ra.prev_cached_value && !bits_equal(*ra.prev_cached_value, *rb.prev_cached_value))
            return false;
    }
    return true;
}

}  // namespace celltrail
