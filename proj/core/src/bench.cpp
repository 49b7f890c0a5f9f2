#include "celltrail/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <thread>

#include "celltrail/eval.hpp"
#include "celltrail/numbers.hpp"

namespace celltrail {
namespace bench {

namespace {

std::string col(int c) { return column_letters(c); }

}  // namespace

Document generate_bench_a(int n, double b2, const BenchAOptions& options) {
    if (n < 1 || n > options.size_cap)
        throw BenchError(BenchErrc::CapExceeded,
                         "size must be in 1.." + std::to_string(options.size_cap) + ", got " +
                             std::to_string(n));
    if (b2 == 0.0)
        throw BenchError(BenchErrc::ZeroSeed, "B2 must be non-zero: the 1x1 block inverts it");

    Document doc;
    doc.set_meta({"bench-a", Timestamp{0}});

    doc.set_base_cell(cell_at(2, 1), number_content(0.0));  // B1
    doc.set_base_cell(cell_at(1, 2), number_content(0.0));  // A2
    doc.set_base_cell(cell_at(2, 2), number_content(b2));   // B2, the seed

    for (int i = 0; i < n; ++i) {
        const int c = 3 + i;               // row 1 and row 2 grow rightward
        const std::string left = col(c - 1);
        doc.set_base_cell(cell_at(c, 1), formula_content("=" + left + "1+1"));
        doc.set_base_cell(cell_at(c, 2),
                          formula_content("=SIN(" + left + "2+" + left + "1)"));
        const int r = 3 + i;               // columns A and B grow downward
        doc.set_base_cell(cell_at(1, r),
                          formula_content("=A" + std::to_string(r - 1) + "+1"));
        doc.set_base_cell(cell_at(2, r),
                          formula_content("=COS(B" + std::to_string(r - 1) + "+A" +
                                          std::to_string(r - 1) + ")"));
    }

    // Main section: each cell inverts the largest square block that fits
    // above-left of it, sized by the border counters.
    for (int r = 3; r < 3 + n; ++r) {
        for (int c = 3; c < 3 + n; ++c) {
            const std::string cl = col(c);
            const std::string rw = std::to_string(r);
            const std::string ar = "$A" + rw;   // row counter (column absolute)
            const std::string c1 = cl + "$1";   // column counter (row absolute)
            doc.set_base_cell(
                cell_at(c, r),
                formula_content("=INDEX(MINVERSE(OFFSET($A$1;1+MAX(0;" + ar + "-" + c1 +
                                ");1+MAX(0;" + c1 + "-" + ar + ");MIN(" + c1 + ";" + ar +
                                ");MIN(" + c1 + ";" + ar + ")));1;1)"));
        }
    }
    return doc;
}

Document generate_bench_b(int rows, int cols) {
    if (rows < 1 || cols < 1)
        throw BenchError(BenchErrc::CapExceeded, "rows and cols must be >= 1");

    Document doc;
    doc.set_meta({"bench-b", Timestamp{0}});

    doc.set_base_cell(cell_at(1, 3), number_content(1.0));  // A3
    for (int j = 0; j < cols; ++j) {
        const int c = 2 + j;  // row 3 counts up by one
        doc.set_base_cell(cell_at(c, 3), formula_content("=" + col(c - 1) + "3+1"));
    }
    for (int i = 0; i < rows; ++i) {
        const int r = 4 + i;  // column A counts up by two
        doc.set_base_cell(cell_at(1, r),
                          formula_content("=A" + std::to_string(r - 1) + "+2"));
    }
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            const int r = 4 + i;
            const int c = 2 + j;
            doc.set_base_cell(cell_at(c, r),
                              formula_content("=EXP(SIN(COS($A" + std::to_string(r) + "*" +
                                              col(c) + "$3)))"));
        }
    }
    return doc;
}

std::vector<TimingSample> run_timing(std::span<const int> sizes,
                                     std::span<const double> b2_values, int concurrency) {
    if (b2_values.size() < 2)
        throw BenchError(BenchErrc::DegenerateInput,
                         "need at least two seeds: the first recalculation only warms up");
    if (concurrency < 1)
        throw BenchError(BenchErrc::DegenerateInput, "concurrency must be >= 1");

    std::vector<TimingSample> samples;
    for (const int n : sizes) {
        const Document proto = generate_bench_a(n, b2_values[0]);
        std::vector<Document> copies(static_cast<std::size_t>(concurrency), proto);
        std::vector<Recalculator> engines;
        engines.reserve(copies.size());
        for (auto& d : copies) engines.emplace_back(d);

        Timestamp edit_clock{1};
        for (auto& engine : engines) engine.recalculate();  // warm-up

        for (std::size_t trial = 1; trial < b2_values.size(); ++trial) {
            for (auto& d : copies) {
                if (!bits_equal(std::get<double>(d.content_at(cell_at(2, 2))),
                                b2_values[trial]))
                    d.set_cell(cell_at(2, 2), number_content(b2_values[trial]), "bench",
                               edit_clock);
            }
            edit_clock.seconds += 1;

            std::vector<double> durations(copies.size(), 0.0);
            std::vector<std::thread> workers;
            for (std::size_t k = 0; k < copies.size(); ++k) {
                workers.emplace_back([&, k] {
                    const auto start = std::chrono::steady_clock::now();
                    engines[k].recalculate();
                    durations[k] = std::chrono::duration<double>(
                                       std::chrono::steady_clock::now() - start)
                                       .count();
                });
            }
            for (auto& w : workers) w.join();
            for (const double d : durations)
                samples.push_back(TimingSample{n, d, concurrency});
        }
    }
    return samples;
}

PowerLawFit fit_power_law(std::span<const std::pair<double, double>> points) {
    if (points.size() < 2)
        throw BenchError(BenchErrc::DegenerateInput, "need at least two points");
    for (const auto& [n, t] : points)
        if (n <= 0.0 || t <= 0.0)
            throw BenchError(BenchErrc::DegenerateInput,
                             "power-law fitting needs positive sizes and times");
    double mean_x = 0.0, mean_y = 0.0;
    for (const auto& [n, t] : points) {
        mean_x += std::log(n);
        mean_y += std::log(t);
    }
    mean_x /= static_cast<double>(points.size());
    mean_y /= static_cast<double>(points.size());
    double sxy = 0.0, sxx = 0.0;
    for (const auto& [n, t] : points) {
        const double dx = std::log(n) - mean_x;
        sxy += dx * (std::log(t) - mean_y);
        sxx += dx * dx;
    }
    if (sxx == 0.0)
        throw BenchError(BenchErrc::DegenerateInput, "all sizes are equal");
    const double b = sxy / sxx;
    if (b == 0.0)
        throw BenchError(BenchErrc::DegenerateInput, "flat data: exponent would be zero");
    const double a = std::exp(mean_x - mean_y / b);
    return PowerLawFit{a, b};
}

LinearFit fit_linear(std::span<const std::pair<double, double>> points) {
    if (points.size() < 2)
        throw BenchError(BenchErrc::DegenerateInput, "need at least two points");
    double mean_x = 0.0, mean_y = 0.0;
    for (const auto& [x, y] : points) {
        mean_x += x;
        mean_y += y;
    }
    mean_x /= static_cast<double>(points.size());
    mean_y /= static_cast<double>(points.size());
    double sxy = 0.0, sxx = 0.0;
    for (const auto& [x, y] : points) {
        sxy += (x - mean_x) * (y - mean_y);
        sxx += (x - mean_x) * (x - mean_x);
    }
    if (sxx == 0.0) throw BenchError(BenchErrc::DegenerateInput, "all x values are equal");
    const double slope = sxy / sxx;
    return LinearFit{mean_y - slope * mean_x, slope};
}

double estimate_server_memory(const ServerMemoryModel& model, int available, int used) {
    return model.base_mb + model.per_available_mb * available + model.per_used_mb * used;
}

std::vector<OverheadRow> overhead_report(double baseline_seconds,
                                         std::span<const TimingSample> samples) {
    if (baseline_seconds <= 0.0)
        throw BenchError(BenchErrc::DegenerateInput, "baseline must be positive");
    if (samples.empty()) throw BenchError(BenchErrc::EmptySamples, "no timing samples");

    std::map<int, std::vector<double>> by_level;
    for (const auto& s : samples) by_level[s.concurrency].push_back(s.seconds);

    std::vector<OverheadRow> out;
    for (auto& [level, durations] : by_level) {
        std::sort(durations.begin(), durations.end());
        const std::size_t m = durations.size();
        const double median =
            m % 2 ? durations[m / 2] : 0.5 * (durations[m / 2 - 1] + durations[m / 2]);
        // Wall time over tasks completed: k concurrent tasks taking `median`
        // seconds of wall clock cost median/k per task.
        const double per_task = median / level;
        out.push_back(OverheadRow{level, per_task, per_task / baseline_seconds - 1.0});
    }
    return out;
}

// --- CSV --------------------------------------------------------------------

namespace {

std::vector<std::vector<std::string>> split_csv(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    for (const char c : text) {
        if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            row.push_back(std::move(field));
            field.clear();
            if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
            row.clear();
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    if (!field.empty() || !row.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

std::string write_timing_csv(std::span<const TimingSample> samples) {
    std::string out = "N,seconds\n";
    for (const auto& s : samples)
        out += std::to_string(s.size) + "," + render_number(s.seconds) + "\n";
    return out;
}

std::vector<std::pair<double, double>> read_xy_csv(std::string_view text) {
    std::vector<std::pair<double, double>> out;
    for (const auto& row : split_csv(text)) {
        if (row.size() != 2)
            throw BenchError(BenchErrc::BadCsv, "expected two columns per row");
        const auto x = parse_number(row[0]);
        const auto y = parse_number(row[1]);
        if (!x || !y) {
            if (out.empty()) continue;  // header line
            throw BenchError(BenchErrc::BadCsv, "non-numeric row: " + row[0] + "," + row[1]);
        }
        out.emplace_back(*x, *y);
    }
    if (out.empty()) throw BenchError(BenchErrc::BadCsv, "no data rows");
    return out;
}

std::vector<TimingSample> read_concurrency_csv(std::string_view text) {
    std::vector<TimingSample> out;
    for (const auto& [k, seconds] : read_xy_csv(text)) {
        if (k < 1 || k != std::floor(k))
            throw BenchError(BenchErrc::BadCsv, "concurrency must be a positive integer");
        out.push_back(TimingSample{0, seconds, static_cast<int>(k)});
    }
    return out;
}

std::string write_overhead_csv(std::span<const OverheadRow> rows) {
    std::string out = "concurrency,per_task_s,overhead_frac\n";
    for (const auto& r : rows)
        out += std::to_string(r.concurrency) + "," + render_number(r.per_task_seconds) + "," +
               render_number(r.overhead_fraction) + "\n";
    return out;
}

}  // namespace bench
}  // namespace celltrail
