#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "celltrail/document.hpp"
#include "celltrail/formula.hpp"

namespace celltrail {

/// Dense row-major matrix of finite doubles.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

/// Evaluation result: a scalar, a materialized matrix, or a reference to a
/// rectangular block that is materialized on demand.
using Value = std::variant<double, Matrix, CellRange>;

inline bool is_scalar(const Value& v) { return std::holds_alternative<double>(v); }

struct RecalcStats {
    std::int64_t cells_evaluated = 0;  // formula cells actually computed
    double duration_seconds = 0.0;
    int max_dependency_depth = 0;
};

struct EvalOptions {
    int minverse_cap = 64;       // refuse larger inverses
    int max_depth = 4096;        // dependency recursion guard
};

enum class EvalErrc {
    CycleDetected,
    NonNumericInMatrix,
    IndexOutOfBounds,
    OffsetOutOfGrid,
    DivisionByZero,
    DomainError,
    NotSquare,
    Singular,
    MatrixTooLarge,
    DepthExceeded,
};

class EvalError : public std::runtime_error {
public:
    EvalError(EvalErrc code, std::string message) : std::runtime_error(std::move(message)), code_(code) {}
    EvalErrc code() const { return code_; }

private:
    EvalErrc code_;
};

/// Inverse by Gaussian elimination with partial pivoting. Throws NotSquare,
/// MatrixTooLarge, or Singular (pivot below 1e-12 of the largest input
/// entry).
Matrix minverse(const Matrix& m, const EvalOptions& options = {});

/// Evaluates one cell on demand: empty -> 0, number -> itself, formula ->
/// computed with per-call memoization. Does not touch stored caches.
Value evaluate_cell(const Document& doc, const CellAddress& addr, std::size_t sheet = 0,
                    const EvalOptions& options = {});

namespace detail {
/// Parsed-formula cache keyed by cell, invalidated by source-text comparison.
struct ParseCache {
    std::map<std::pair<std::size_t, GridPos>, std::pair<std::string, Expr>> slots;
    const Expr& parsed(std::size_t sheet, GridPos pos, const std::string& source);
};
}  // namespace detail

/// Full-document recalculation engine. Keeps parsed formulas cached between
/// runs, so repeated timing runs measure evaluation, not parsing.
class Recalculator {
public:
    explicit Recalculator(Document& doc, EvalOptions options = {});

    /// Re-evaluates every formula cell from scratch (memo cleared), updates
    /// cached values, and reports stats. Errors propagate tagged with the
    /// failing cell's address.
    RecalcStats recalculate();

private:
    Document& doc_;
    EvalOptions options_;
    detail::ParseCache cache_;
};

/// One-shot convenience wrapper around Recalculator.
RecalcStats recalculate(Document& doc, const EvalOptions& options = {});

}  // namespace celltrail
