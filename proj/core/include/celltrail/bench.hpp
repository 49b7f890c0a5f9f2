#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "celltrail/document.hpp"

namespace celltrail {
namespace bench {

/// time(N) = (N / scale_a) ^ exponent_b
struct PowerLawFit {
    double scale_a = 0.0;
    double exponent_b = 0.0;
};

/// y(x) = intercept + slope * x
struct LinearFit {
    double intercept = 0.0;
    double slope = 0.0;
};

/// Server-side memory line: base + per_available * idle workers +
/// per_used * active workers, in MB.
struct ServerMemoryModel {
    double base_mb = 151.0;
    double per_available_mb = 5.8;
    double per_used_mb = 17.0;
};

struct TimingSample {
    int size = 0;
    double seconds = 0.0;
    int concurrency = 1;
};

struct OverheadRow {
    int concurrency = 1;
    double per_task_seconds = 0.0;
    double overhead_fraction = 0.0;
};

enum class BenchErrc { CapExceeded, ZeroSeed, DegenerateInput, EmptySamples, BadCsv };

class BenchError : public std::runtime_error {
public:
    BenchError(BenchErrc code, std::string message)
        : std::runtime_error(std::move(message)), code_(code) {}
    BenchErrc code() const { return code_; }

private:
    BenchErrc code_;
};

struct BenchAOptions {
    int size_cap = 60;
};

/// The matrix-inverse load spreadsheet: a two-cell-thick border of counters
/// and trig values around an n x n main section where every cell is the
/// (1,1) entry of the inverse of the largest square block above and left of
/// it. B2 holds the seed; changing it forces a full recalculation.
Document generate_bench_a(int n, double b2, const BenchAOptions& options = {});

/// The lighter exp(sin(cos(...))) spreadsheet: row 3 counts up by one,
/// column A by two, and every main cell (top-left B4) computes
/// EXP(SIN(COS($A<row> * <col>$3))).
Document generate_bench_b(int rows, int cols);

/// For each size: builds the spreadsheet, warms it up with the first seed,
/// then times one full recalculation per remaining seed. With concurrency k,
/// k independent copies recalculate simultaneously and each task's own wall
/// time is recorded.
std::vector<TimingSample> run_timing(std::span<const int> sizes,
                                     std::span<const double> b2_values, int concurrency);

/// Least squares on (ln N, ln t): exponent from the slope, scale from
/// exp(mean(ln N) - mean(ln t) / b).
PowerLawFit fit_power_law(std::span<const std::pair<double, double>> points);

/// Ordinary least squares.
LinearFit fit_linear(std::span<const std::pair<double, double>> points);

double estimate_server_memory(const ServerMemoryModel& model, int available, int used);

/// Per concurrency level: per-task seconds (median duration normalized by
/// the level, i.e. wall time over tasks completed) and its overhead versus
/// the baseline.
std::vector<OverheadRow> overhead_report(double baseline_seconds,
                                         std::span<const TimingSample> samples);

// CSV interchange ------------------------------------------------------------

/// "N,seconds" rows, one per sample.
std::string write_timing_csv(std::span<const TimingSample> samples);
/// Two numeric columns with an optional one-line header ("N,seconds", "x,y").
std::vector<std::pair<double, double>> read_xy_csv(std::string_view text);
/// "concurrency,seconds" rows as timing samples.
std::vector<TimingSample> read_concurrency_csv(std::string_view text);
/// "concurrency,per_task_s,overhead_frac" rows.
std::string write_overhead_csv(std::span<const OverheadRow> rows);

}  // namespace bench
}  // namespace celltrail
