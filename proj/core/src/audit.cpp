#include "celltrail/audit.hpp"

#include <algorithm>
#include <sstream>

#include "celltrail/eval.hpp"

namespace celltrail {
namespace audit {

std::string to_string(ChangeClass c) {
    switch (c) {
        case ChangeClass::FormulaToValue: return "formula-to-value";
        case ChangeClass::ValueToFormula: return "value-to-formula";
        case ChangeClass::FormulaEdited: return "formula-edited";
        case ChangeClass::ValueEdited: return "value-edited";
        case ChangeClass::Entered: return "entered";
        case ChangeClass::Cleared: return "cleared";
        case ChangeClass::Structural: return "structural";
        case ChangeClass::Moved: return "moved";
    }
    return "?";
}

std::optional<ChangeClass> parse_change_class(std::string_view name) {
    for (const ChangeClass c :
         {ChangeClass::FormulaToValue, ChangeClass::ValueToFormula, ChangeClass::FormulaEdited,
          ChangeClass::ValueEdited, ChangeClass::Entered, ChangeClass::Cleared,
          ChangeClass::Structural, ChangeClass::Moved})
        if (to_string(c) == name) return c;
    return std::nullopt;
}

ChangeClass classify(const ChangeRecord& record) {
    if (is_cell_move(record.kind)) return ChangeClass::Moved;
    if (!is_content_change(record.kind)) return ChangeClass::Structural;
    const CellContent& prev = record.previous;
    const CellContent& next = record.next;
    // First matching rule wins.
    if (is_formula(prev) && !is_formula(next) && !is_empty(next))
        return ChangeClass::FormulaToValue;
    if (!is_formula(prev) && is_formula(next)) return ChangeClass::ValueToFormula;
    if (is_formula(prev) && is_formula(next)) return ChangeClass::FormulaEdited;
    if (is_empty(prev) && !is_empty(next)) return ChangeClass::Entered;
    if (!is_empty(prev) && is_empty(next)) return ChangeClass::Cleared;
    return ChangeClass::ValueEdited;
}

std::vector<ChangeRecord> filter_changes(std::span<const ChangeRecord> log,
                                         const FilterSpec& spec) {
    if (spec.since && spec.until && *spec.until < *spec.since)
        throw std::invalid_argument("filter interval is empty: since > until");
    std::vector<ChangeRecord> out;
    for (const auto& rec : log) {
        if (spec.authors && !spec.authors->count(rec.author)) continue;
        if (spec.since && rec.timestamp < *spec.since) continue;
        if (spec.until && *spec.until < rec.timestamp) continue;
        if (spec.region) {
            if (!rec.target || !spec.region->contains(*rec.target)) continue;
        }
        if (spec.classes && !spec.classes->count(classify(rec))) continue;
        out.push_back(rec);
    }
    return out;
}

std::optional<Discrepancy> discrepancy(const ChangeRecord& record, double tolerance) {
    if (classify(record) != ChangeClass::FormulaToValue) return std::nullopt;
    if (!is_number(record.next) || !record.prev_cached_value) return std::nullopt;
    const double entered = std::get<double>(record.next);
    const double computed = *record.prev_cached_value;
    const double delta = entered - computed;
    if (std::abs(delta) <= tolerance) return std::nullopt;
    return Discrepancy{record.id, computed, entered, delta};
}

std::map<std::int64_t, Discrepancy> strict_discrepancies(const Document& doc,
                                                         double tolerance) {
    std::map<std::int64_t, Discrepancy> out;
    for (const auto& rec : doc.changes()) {
        if (classify(rec) != ChangeClass::FormulaToValue || !is_number(rec.next)) continue;
        // Evaluate the replaced formula in the state just before this change.
        const Document prior = reconstruct_at(doc, rec.id - 1);
        const auto sheet = prior.find_sheet(rec.sheet);
        if (!sheet) continue;
        double computed = 0.0;
        try {
            const Value v = evaluate_cell(prior, *rec.target, *sheet);
            if (!is_scalar(v)) continue;
            computed = std::get<double>(v);
        } catch (const EvalError&) {
            continue;  // unevaluable prior state: nothing to compare against
        }
        const double entered = std::get<double>(rec.next);
        const double delta = entered - computed;
        if (std::abs(delta) > tolerance)
            out.emplace(rec.id, Discrepancy{rec.id, computed, entered, delta});
    }
    return out;
}

std::vector<BlockOp> group_blocks(std::span<const ChangeRecord> log,
                                  const BlockGroupOptions& options) {
    std::vector<BlockOp> out;
    std::size_t i = 0;
    while (i < log.size()) {
        const auto* mv = std::get_if<MoveKind>(&log[i].kind);
        if (!mv) {
            ++i;
            continue;
        }
        const int dc = mv->to.col - mv->from.col;
        const int dr = mv->to.row - mv->from.row;
        BlockOp op;
        op.author = log[i].author;
        op.first = op.last = log[i].timestamp;
        op.record_ids.push_back(log[i].id);
        CellRange from{mv->from, mv->from};
        CellRange to{mv->to, mv->to};
        std::size_t j = i + 1;
        for (; j < log.size(); ++j) {
            const auto* next = std::get_if<MoveKind>(&log[j].kind);
            if (!next) break;
            if (log[j].author != op.author) break;
            if (next->to.col - next->from.col != dc || next->to.row - next->from.row != dr)
                break;
            if (log[j].timestamp.seconds - log[j - 1].timestamp.seconds >
                options.window_seconds)
                break;
            op.record_ids.push_back(log[j].id);
            op.last = log[j].timestamp;
            from.start.col = std::min(from.start.col, next->from.col);
            from.start.row = std::min(from.start.row, next->from.row);
            from.end.col = std::max(from.end.col, next->from.col);
            from.end.row = std::max(from.end.row, next->from.row);
            to.start.col = std::min(to.start.col, next->to.col);
            to.start.row = std::min(to.start.row, next->to.row);
            to.end.col = std::max(to.end.col, next->to.col);
            to.end.row = std::max(to.end.row, next->to.row);
        }
        op.from_region = from;
        op.to_region = to;
        out.push_back(std::move(op));
        i = j;
    }
    return out;
}

Document reconstruct_at(const Document& doc, std::int64_t change_id) {
    if (change_id < 0 || change_id > doc.last_change_id())
        throw ContainerError(ContainerErrc::UnknownChangeId,
                             "no change with id " + std::to_string(change_id));
    const auto violations = doc.verify_chain();
    if (!violations.empty())
        throw ContainerError(ContainerErrc::ChainBroken,
                             "audit chain is broken at record " +
                                 std::to_string(violations.front().record_id) + ": " +
                                 violations.front().reason);

    std::vector<SheetData> sheets;
    for (const auto& s : doc.sheets()) sheets.push_back(s);

    const auto& changes = doc.changes();
    for (auto it = changes.rbegin(); it != changes.rend(); ++it) {
        if (it->id <= change_id) break;
        for (auto& s : sheets) {
            if (s.name == it->sheet) {
                Document::reverse_record(s.cells, *it);
                break;
            }
        }
    }
    std::vector<ChangeRecord> truncated(changes.begin(),
                                        changes.begin() + static_cast<std::ptrdiff_t>(change_id));
    return Document::from_parts(doc.meta(), std::move(sheets), std::move(truncated),
                                /*read_only=*/true);
}

Document replay_forward(const Document& base, std::span<const ChangeRecord> records,
                        std::int64_t through_id) {
    std::vector<SheetData> sheets;
    for (const auto& s : base.sheets()) sheets.push_back(s);
    std::vector<ChangeRecord> applied(base.changes().begin(), base.changes().end());
    for (const auto& rec : records) {
        if (rec.id <= base.last_change_id()) continue;
        if (rec.id > through_id) break;
        for (auto& s : sheets) {
            if (s.name == rec.sheet) {
                Document::apply_record(s.cells, rec);
                break;
            }
        }
        applied.push_back(rec);
    }
    return Document::from_parts(base.meta(), std::move(sheets), std::move(applied),
                                /*read_only=*/true);
}

std::string csv_escape(std::string_view field) {
    const bool needs_quotes = field.find_first_of(",\"\r\n") != std::string_view::npos;
    if (!needs_quotes) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

namespace {

std::string cell_column_of(const ChangeRecord& rec) {
    return rec.target ? render_address(*rec.target) : std::string();
}

std::vector<std::vector<std::string>> report_rows(
    std::span<const ChangeRecord> records,
    const std::map<std::int64_t, Discrepancy>* delta_override) {
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"id", "timestamp", "author", "cell", "class", "previous", "new", "delta"});
    for (const auto& rec : records) {
        std::string delta;
        if (delta_override) {
            if (const auto it = delta_override->find(rec.id); it != delta_override->end())
                delta = render_number(it->second.delta);
        } else if (const auto d = discrepancy(rec)) {
            delta = render_number(d->delta);
        }
        rows.push_back({std::to_string(rec.id), render_timestamp(rec.timestamp), rec.author,
                        cell_column_of(rec), to_string(classify(rec)),
                        render_content(rec.previous), render_content(rec.next),
                        std::move(delta)});
    }
    return rows;
}

std::string rows_to_csv(const std::vector<std::vector<std::string>>& rows) {
    std::string out;
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out.push_back(',');
            out += csv_escape(row[i]);
        }
        out.push_back('\n');
    }
    return out;
}

std::string rows_to_text(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> widths(rows.front().size(), 0);
    for (const auto& row : rows)
        for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], row[i].size());
    std::string out;
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += "  ";
            out += row[i];
            if (i + 1 < row.size()) out.append(widths[i] - row[i].size(), ' ');
        }
        // Trim trailing padding.
        while (!out.empty() && out.back() == ' ') out.pop_back();
        out.push_back('\n');
    }
    return out;
}

}  // namespace

std::string render_report(std::span<const ChangeRecord> records, ReportFormat format) {
    const auto rows = report_rows(records, nullptr);
    return format == ReportFormat::Csv ? rows_to_csv(rows) : rows_to_text(rows);
}

std::string render_report(std::span<const ChangeRecord> records, ReportFormat format,
                          const std::map<std::int64_t, Discrepancy>& delta_override) {
    const auto rows = report_rows(records, &delta_override);
    return format == ReportFormat::Csv ? rows_to_csv(rows) : rows_to_text(rows);
}

}  // namespace audit
}  // namespace celltrail
