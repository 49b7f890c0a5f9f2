#include "celltrail/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

namespace celltrail {

namespace {

[[noreturn]] void eval_fail(EvalErrc code, const std::string& message) {
    throw EvalError(code, message);
}

double checked_finite(double v, const char* what) {
    if (!std::isfinite(v)) eval_fail(EvalErrc::DomainError, std::string(what) + " is not finite");
    return v;
}

}  // namespace

Matrix minverse(const Matrix& m, const EvalOptions& options) {
    if (m.rows != m.cols)
        eval_fail(EvalErrc::NotSquare, "MINVERSE requires a square block, got " +
                                           std::to_string(m.rows) + "x" + std::to_string(m.cols));
    const int n = m.rows;
    if (n < 1) eval_fail(EvalErrc::NotSquare, "MINVERSE requires a non-empty block");
    if (n > options.minverse_cap)
        eval_fail(EvalErrc::MatrixTooLarge,
                  "matrix size " + std::to_string(n) + " exceeds cap " +
                      std::to_string(options.minverse_cap));

    double max_entry = 0.0;
    for (double v : m.data) max_entry = std::max(max_entry, std::abs(v));
    const double pivot_floor = 1e-12 * max_entry;

    // Gauss-Jordan on [A | I] with partial pivoting.
    Matrix aug(n, 2 * n);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) aug.at(r, c) = m.at(r, c);
        aug.at(r, n + r) = 1.0;
    }
    for (int k = 0; k < n; ++k) {
        int pivot_row = k;
        for (int r = k + 1; r < n; ++r)
            if (std::abs(aug.at(r, k)) > std::abs(aug.at(pivot_row, k))) pivot_row = r;
        const double pivot = aug.at(pivot_row, k);
        if (std::abs(pivot) <= pivot_floor || pivot == 0.0)
            eval_fail(EvalErrc::Singular, "matrix is singular to working precision");
        if (pivot_row != k)
            for (int c = 0; c < 2 * n; ++c) std::swap(aug.at(k, c), aug.at(pivot_row, c));
        const double inv_pivot = 1.0 / pivot;
        for (int c = 0; c < 2 * n; ++c) aug.at(k, c) *= inv_pivot;
        for (int r = 0; r < n; ++r) {
            if (r == k) continue;
            const double factor = aug.at(r, k);
            if (factor == 0.0) continue;
            for (int c = 0; c < 2 * n; ++c) aug.at(r, c) -= factor * aug.at(k, c);
        }
    }
    Matrix out(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) out.at(r, c) = checked_finite(aug.at(r, n + c), "inverse entry");
    return out;
}

namespace detail {

const Expr& ParseCache::parsed(std::size_t sheet, GridPos pos, const std::string& source) {
    auto& slot = slots[{sheet, pos}];
    if (slot.first != source) {
        slot.second = parse_formula(source);
        slot.first = source;
    }
    return slot.second;
}

}  // namespace detail

namespace {

using PosKey = std::pair<std::size_t, GridPos>;

/// Demand-driven evaluator with memoization and an in-progress mark for
/// cycle detection. Parse results may be reused across runs through the
/// owning Recalculator's cache.
class Evaluator {
public:
    Evaluator(const Document& doc, const EvalOptions& options, detail::ParseCache* cache)
        : doc_(doc), options_(options), cache_(cache) {}

    double cell_scalar(std::size_t sheet, const CellAddress& addr) {
        const PosKey key{sheet, grid_pos(addr)};
        if (const auto it = memo_.find(key); it != memo_.end()) return it->second;

        const Cell* cell = doc_.find_cell(addr, sheet);
        if (!cell || is_empty(cell->content)) return 0.0;  // spreadsheet convention
        if (is_number(cell->content)) return std::get<double>(cell->content);
        if (is_text(cell->content))
            eval_fail(EvalErrc::DomainError,
                      "text cell " + render_address(addr) + " used in numeric context");

        if (in_progress_.count(key)) {
            std::string path;
            for (const auto& p : stack_) {
                path += render_address(grid_addr(p.second));
                path += " -> ";
            }
            path += render_address(addr);
            eval_fail(EvalErrc::CycleDetected, "circular reference: " + path);
        }
        if (static_cast<int>(stack_.size()) >= options_.max_depth)
            eval_fail(EvalErrc::DepthExceeded, "dependency chain exceeds depth limit at " +
                                                   render_address(addr));

        in_progress_.insert(key);
        stack_.push_back(key);
        max_depth_ = std::max(max_depth_, static_cast<int>(stack_.size()));

        const Expr& expr = parsed(sheet, addr, std::get<FormulaSource>(cell->content).text);
        const Value v = eval(expr, sheet);
        const double scalar = to_scalar(v, sheet);

        stack_.pop_back();
        in_progress_.erase(key);
        ++cells_evaluated_;
        memo_[key] = scalar;
        return scalar;
    }

    Value cell_value(std::size_t sheet, const CellAddress& addr) {
        const Cell* cell = doc_.find_cell(addr, sheet);
        if (!cell || is_empty(cell->content)) return 0.0;
        return cell_scalar(sheet, addr);
    }

    std::int64_t cells_evaluated() const { return cells_evaluated_; }
    int max_depth() const { return max_depth_; }

private:
    const Expr& parsed(std::size_t sheet, const CellAddress& addr, const std::string& source) {
        if (cache_) return cache_->parsed(sheet, grid_pos(addr), source);
        const PosKey key{sheet, grid_pos(addr)};
        auto it = local_parse_.find(key);
        if (it == local_parse_.end())
            it = local_parse_.emplace(key, parse_formula(source)).first;
        return it->second;
    }

    double to_scalar(const Value& v, std::size_t sheet) {
        if (const auto* d = std::get_if<double>(&v)) return *d;
        if (const auto* m = std::get_if<Matrix>(&v)) {
            if (m->rows == 1 && m->cols == 1) return m->at(0, 0);
            eval_fail(EvalErrc::DomainError, "matrix used where a single value is required");
        }
        const auto& range = std::get<CellRange>(v);
        if (range.width() == 1 && range.height() == 1)
            return cell_scalar(sheet, range.start);
        eval_fail(EvalErrc::DomainError, "range used where a single value is required");
    }

    Matrix materialize(const CellRange& range, std::size_t sheet) {
        Matrix out(range.height(), range.width());
        for (int r = 0; r < out.rows; ++r) {
            for (int c = 0; c < out.cols; ++c) {
                const CellAddress addr = cell_at(range.start.col + c, range.start.row + r);
                const Cell* cell = doc_.find_cell(addr, sheet);
                if (!cell || is_empty(cell->content) || is_text(cell->content))
                    eval_fail(EvalErrc::NonNumericInMatrix,
                              "cell " + render_address(addr) + " is not numeric");
                out.at(r, c) = checked_finite(cell_scalar(sheet, addr), "matrix entry");
            }
        }
        return out;
    }

    Matrix to_matrix(const Value& v, std::size_t sheet) {
        if (const auto* m = std::get_if<Matrix>(&v)) return *m;
        if (const auto* range = std::get_if<CellRange>(&v)) return materialize(*range, sheet);
        Matrix out(1, 1);
        out.at(0, 0) = std::get<double>(v);
        return out;
    }

    long long to_index(const Value& v, std::size_t sheet, const char* what) {
        const double d = to_scalar(v, sheet);
        const double rounded = std::nearbyint(d);
        if (std::abs(d - rounded) > 1e-9)
            eval_fail(EvalErrc::DomainError, std::string(what) + " must be an integer");
        return static_cast<long long>(rounded);
    }

    Value eval(const Expr& e, std::size_t sheet) {
        if (const auto* n = std::get_if<NumExpr>(&e.node)) return n->value;
        if (const auto* r = std::get_if<RefExpr>(&e.node)) return cell_scalar(sheet, r->address);
        if (const auto* rg = std::get_if<RangeExpr>(&e.node)) return rg->range;
        if (const auto* neg = std::get_if<NegExpr>(&e.node))
            return -to_scalar(eval(*neg->operand, sheet), sheet);
        if (const auto* b = std::get_if<BinaryExpr>(&e.node)) {
            const double l = to_scalar(eval(*b->left, sheet), sheet);
            const double r2 = to_scalar(eval(*b->right, sheet), sheet);
            switch (b->op) {
                case BinaryOp::Add: return checked_finite(l + r2, "sum");
                case BinaryOp::Sub: return checked_finite(l - r2, "difference");
                case BinaryOp::Mul: return checked_finite(l * r2, "product");
                case BinaryOp::Div:
                    if (r2 == 0.0) eval_fail(EvalErrc::DivisionByZero, "division by zero");
                    return checked_finite(l / r2, "quotient");
                case BinaryOp::Pow: {
                    const double out = std::pow(l, r2);
                    if (!std::isfinite(out))
                        eval_fail(EvalErrc::DomainError, "power result is not finite");
                    return out;
                }
            }
        }
        return eval_call(std::get<FuncExpr>(e.node), sheet);
    }

    Value eval_call(const FuncExpr& call, std::size_t sheet) {
        const std::string& fn = call.name;
        if (fn == "SIN") return std::sin(to_scalar(eval(call.args[0], sheet), sheet));
        if (fn == "COS") return std::cos(to_scalar(eval(call.args[0], sheet), sheet));
        if (fn == "EXP") {
            const double out = std::exp(to_scalar(eval(call.args[0], sheet), sheet));
            if (!std::isfinite(out)) eval_fail(EvalErrc::DomainError, "EXP overflow");
            return out;
        }
        if (fn == "MAX" || fn == "MIN") {
            double best = to_scalar(eval(call.args[0], sheet), sheet);
            for (std::size_t i = 1; i < call.args.size(); ++i) {
                const double v = to_scalar(eval(call.args[i], sheet), sheet);
                best = fn == "MAX" ? std::max(best, v) : std::min(best, v);
            }
            return best;
        }
        if (fn == "SUM") {
            double total = 0.0;
            for (const auto& arg : call.args) {
                const Value v = eval(arg, sheet);
                if (const auto* range = std::get_if<CellRange>(&v)) {
                    // Empty cells contribute zero inside a summed range.
                    for (int r = range->start.row; r <= range->end.row; ++r)
                        for (int c = range->start.col; c <= range->end.col; ++c) {
                            const CellAddress addr = cell_at(c, r);
                            const Cell* cell = doc_.find_cell(addr, sheet);
                            if (!cell || is_empty(cell->content)) continue;
                            if (is_text(cell->content))
                                eval_fail(EvalErrc::NonNumericInMatrix,
                                          "cell " + render_address(addr) + " is not numeric");
                            total += cell_scalar(sheet, addr);
                        }
                } else if (const auto* m = std::get_if<Matrix>(&v)) {
                    for (double d : m->data) total += d;
                } else {
                    total += std::get<double>(v);
                }
            }
            return checked_finite(total, "SUM");
        }
        if (fn == "OFFSET") {
            // OFFSET(anchor; rows; cols; height; width) -> block reference.
            const Expr& anchor = call.args[0];
            CellAddress base;
            if (const auto* r = std::get_if<RefExpr>(&anchor.node))
                base = r->address;
            else if (const auto* rg = std::get_if<RangeExpr>(&anchor.node))
                base = rg->range.start;
            else
                eval_fail(EvalErrc::DomainError, "OFFSET anchor must be a cell reference");
            const long long dr = to_index(eval(call.args[1], sheet), sheet, "OFFSET row shift");
            const long long dc = to_index(eval(call.args[2], sheet), sheet, "OFFSET column shift");
            const long long h = to_index(eval(call.args[3], sheet), sheet, "OFFSET height");
            const long long w = to_index(eval(call.args[4], sheet), sheet, "OFFSET width");
            if (h < 1 || w < 1)
                eval_fail(EvalErrc::OffsetOutOfGrid, "OFFSET block must be at least 1x1");
            const long long col = base.col + dc;
            const long long row = base.row + dr;
            if (col < 1 || row < 1)
                eval_fail(EvalErrc::OffsetOutOfGrid, "OFFSET block starts before column/row 1");
            if (col + w - 1 > 1'000'000 || row + h - 1 > 1'000'000)
                eval_fail(EvalErrc::OffsetOutOfGrid, "OFFSET block is unreasonably large");
            return CellRange{cell_at(static_cast<int>(col), static_cast<int>(row)),
                             cell_at(static_cast<int>(col + w - 1), static_cast<int>(row + h - 1))};
        }
        if (fn == "INDEX") {
            const Matrix m = to_matrix(eval(call.args[0], sheet), sheet);
            const long long i = to_index(eval(call.args[1], sheet), sheet, "INDEX row");
            const long long j = to_index(eval(call.args[2], sheet), sheet, "INDEX column");
            if (i < 1 || i > m.rows || j < 1 || j > m.cols)
                eval_fail(EvalErrc::IndexOutOfBounds,
                          "INDEX (" + std::to_string(i) + "," + std::to_string(j) +
                              ") outside a " + std::to_string(m.rows) + "x" +
                              std::to_string(m.cols) + " block");
            return m.at(static_cast<int>(i) - 1, static_cast<int>(j) - 1);
        }
        if (fn == "MINVERSE") {
            const Value arg = eval(call.args[0], sheet);
            return minverse(to_matrix(arg, sheet), options_);
        }
        eval_fail(EvalErrc::DomainError, "unsupported function: " + fn);
    }

    const Document& doc_;
    const EvalOptions& options_;
    detail::ParseCache* cache_;
    std::map<PosKey, double> memo_;
    std::set<PosKey> in_progress_;
    std::vector<PosKey> stack_;
    std::map<PosKey, Expr> local_parse_;
    std::int64_t cells_evaluated_ = 0;
    int max_depth_ = 0;
};

}  // namespace

Value evaluate_cell(const Document& doc, const CellAddress& addr, std::size_t sheet,
                    const EvalOptions& options) {
    Evaluator ev(doc, options, nullptr);
    return ev.cell_value(sheet, addr);
}

Recalculator::Recalculator(Document& doc, EvalOptions options)
    : doc_(doc), options_(options) {}

RecalcStats Recalculator::recalculate() {
    const auto start = std::chrono::steady_clock::now();
    Evaluator ev(doc_, options_, &cache_);

    std::vector<std::pair<std::size_t, GridPos>> formulas;
    for (std::size_t s = 0; s < doc_.sheet_count(); ++s)
        for (const auto& [pos, cell] : doc_.sheet(s).cells)
            if (is_formula(cell.content)) formulas.emplace_back(s, pos);

    for (const auto& [s, pos] : formulas) {
        try {
            ev.cell_scalar(s, grid_addr(pos));
        } catch (const EvalError& e) {
            throw EvalError(e.code(), std::string(e.what()) + " (while recalculating " +
                                          render_address(grid_addr(pos)) + ")");
        }
    }
    for (const auto& [s, pos] : formulas)
        doc_.store_cached_value(grid_addr(pos), ev.cell_scalar(s, grid_addr(pos)), s);

    RecalcStats stats;
    stats.cells_evaluated = ev.cells_evaluated();
    stats.max_dependency_depth = ev.max_depth();
    stats.duration_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return stats;
}

RecalcStats recalculate(Document& doc, const EvalOptions& options) {
    return Recalculator(doc, options).recalculate();
}

}  // namespace celltrail
