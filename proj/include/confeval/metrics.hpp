#pragma once

#include "confeval/calibration.hpp"
#include "confeval/dataset.hpp"
#include "confeval/evaluator.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace confeval {

enum class Partition { Baseline, Kept, Rejected };

std::string partition_name(Partition p);

struct PeriodReport {
    std::size_t period = 0;
    std::int64_t start = 0;
    Confusion baseline;
    Confusion kept;
    Confusion rejected;
    double rejection_rate = 0.0;            // rejected / total (0 for an empty period)
    std::vector<std::size_t> class_counts;  // ground-truth examples per class
    std::vector<double> drift_rates;        // per class: fraction of its examples rejected

    const Confusion& partition(Partition p) const;
    std::size_t total() const noexcept { return baseline.total(); }
    std::size_t rejected_count() const noexcept { return rejected.total(); }
};

// Confusions of all / kept / rejected decisions. Every decision id needs an
// entry in `truth` (IntegrityError otherwise).
PeriodReport period_metrics(std::span<const Decision> decisions, const std::unordered_map<std::string, Label>& truth,
                            std::size_t num_classes, Label positive);

// Trapezoidal area under a per-period series, normalized by N - 1.
double aut(std::span<const double> values);

// Spearman rank correlation (average ranks for ties). Returns 0 when either
// series is constant.
double spearman_rho(std::span<const double> x, std::span<const double> y);

struct TimeSeriesReport {
    LabelSpace labels;
    Label positive = 0;
    std::vector<PeriodReport> periods;
    // "<metric>/<partition>" -> AUT, for f1 / precision / recall.
    std::map<std::string, double> aut;

    std::vector<double> series(const std::string& metric, Partition p) const;
    std::vector<double> rejection_rates() const;
};

// Decides every test example period by period and assembles the report.
TimeSeriesReport evaluate_stream(const CalibratedEvaluator& ev, const TemporalSplit& split, Label positive,
                                 std::size_t threads = 1);
// Report from decisions that were already made, one list per period.
TimeSeriesReport report_from_decisions(const std::vector<std::vector<Decision>>& decisions,
                                       const std::vector<Dataset>& periods, const std::vector<std::int64_t>& starts,
                                       const LabelSpace& labels, Label positive);

nlohmann::json report_to_json(const TimeSeriesReport& r);
// One row per period, partition and metric: `period,start,partition,metric,value,degenerate`.
std::string format_report_csv(const TimeSeriesReport& r);

}  // namespace confeval
