#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "celltrail/document.hpp"

namespace celltrail {
namespace audit {

/// Total classification of a change record. FormulaToValue is the headline
/// case: a computed result replaced by a typed-in constant.
enum class ChangeClass {
    FormulaToValue,
    ValueToFormula,
    FormulaEdited,
    ValueEdited,
    Entered,
    Cleared,
    Structural,
    Moved,
};

/// Kebab-case name used by reports, filters and the CLI
/// ("formula-to-value", ...).
std::string to_string(ChangeClass c);
std::optional<ChangeClass> parse_change_class(std::string_view name);

ChangeClass classify(const ChangeRecord& record);

/// Conjunctive filter; absent criteria match everything.
struct FilterSpec {
    std::optional<std::set<std::string>> authors;
    std::optional<Timestamp> since;
    std::optional<Timestamp> until;
    std::optional<CellRange> region;
    std::optional<std::set<ChangeClass>> classes;
};

std::vector<ChangeRecord> filter_changes(std::span<const ChangeRecord> log,
                                         const FilterSpec& spec);

/// A formula-to-value change whose entered constant disagrees with the
/// formula's last computed value.
struct Discrepancy {
    std::int64_t record_id = 0;
    double formula_result = 0.0;
    double entered_value = 0.0;
    double delta = 0.0;  // entered_value - formula_result
};

std::optional<Discrepancy> discrepancy(const ChangeRecord& record, double tolerance = 1e-9);

/// Strict mode: re-evaluates each replaced formula in the reconstructed
/// prior state instead of trusting the stored cache. Returns record id ->
/// discrepancy for every formula-to-value change exceeding the tolerance.
std::map<std::int64_t, Discrepancy> strict_discrepancies(const Document& doc,
                                                         double tolerance = 1e-9);

/// Consecutive per-cell move records regrouped into the user-level block
/// operation that produced them.
struct BlockOp {
    CellRange from_region;
    CellRange to_region;
    std::vector<std::int64_t> record_ids;
    std::string author;
    Timestamp first;
    Timestamp last;
};

struct BlockGroupOptions {
    std::int64_t window_seconds = 2;  // max gap between grouped records
};

std::vector<BlockOp> group_blocks(std::span<const ChangeRecord> log,
                                  const BlockGroupOptions& options = {});

/// State immediately after record `change_id` (0 = base state). The result
/// carries the truncated log and is read-only. Requires an intact chain.
Document reconstruct_at(const Document& doc, std::int64_t change_id);

/// Applies records (id <= through_id) from `base` forward; the counterpart
/// of reconstruct_at used by replay checks.
Document replay_forward(const Document& base, std::span<const ChangeRecord> records,
                        std::int64_t through_id);

enum class ReportFormat { Text, Csv };

/// Renders records in input order. CSV columns:
/// id,timestamp,author,cell,class,previous,new,delta — delta is blank unless
/// the record is a discrepancy. `delta_override` substitutes externally
/// computed deltas (strict mode); records absent from the map get none.
std::string render_report(std::span<const ChangeRecord> records, ReportFormat format);
std::string render_report(std::span<const ChangeRecord> records, ReportFormat format,
                          const std::map<std::int64_t, Discrepancy>& delta_override);

/// RFC 4180 field quoting.
std::string csv_escape(std::string_view field);

}  // namespace audit
}  // namespace celltrail
