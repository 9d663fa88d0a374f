#pragma once

#include "confeval/dataset.hpp"
#include "confeval/pvalue.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace confeval {

// Per-class rejection thresholds. A record predicted as c is kept when its
// quality score >= cred[c] and, if conf is set, its confidence >= conf[c].
struct ThresholdSet {
    std::vector<double> cred;
    std::optional<std::vector<double>> conf;

    static ThresholdSet zeros(std::size_t num_classes, bool with_confidence = false);
    // Layout: cred for every class, then conf for every class when present.
    static ThresholdSet from_vector(std::span<const double> t, std::size_t num_classes);
    std::vector<double> to_vector() const;

    void validate(std::size_t num_classes) const;  // DomainError

    friend bool operator==(const ThresholdSet&, const ThresholdSet&) = default;
};

nlohmann::json thresholds_to_json(const ThresholdSet& t, const LabelSpace& labels);
ThresholdSet thresholds_from_json(const nlohmann::json& j, const LabelSpace& labels);

bool keep(const PValueRecord& r, const ThresholdSet& t);

enum class Metric { F1Kept, PrecisionKept, RecallKept, KeptRate, NegRejectionRate };

Metric metric_from_name(std::string_view name);  // ConfigError
std::string metric_name(Metric m);

enum class QualityMetric { Credibility, CredConf, RawProbability };

QualityMetric quality_from_name(std::string_view name);  // ConfigError
std::string quality_name(QualityMetric q);

struct MetricValue {
    double value = 0.0;
    bool degenerate = false;  // empty denominator; value forced to 0
};

struct SearchSpec {
    Metric objective = Metric::F1Kept;
    Metric constraint = Metric::KeptRate;
    double bound = 0.85;
    std::size_t max_iterations = 100000;
    std::size_t no_update_stop = 3000;  // 0 disables the early stop
    std::uint64_t seed = 0;
    QualityMetric quality = QualityMetric::Credibility;
    std::size_t threads = 1;
    std::optional<std::string> positive;  // default: last class of the label space
    double grid_cap = 1e7;

    bool use_confidence() const noexcept { return quality == QualityMetric::CredConf; }
    void validate() const;  // ConfigError
};

// `default`: max f1-kept s.t. kept-rate >= 0.85.
// `min-rejection`: max neg-rejection-rate s.t. f1-kept >= 0.8.
SearchSpec search_preset(std::string_view name);
SearchSpec search_spec_from_json(const nlohmann::json& j);
nlohmann::json search_spec_to_json(const SearchSpec& s);

Label positive_label(const SearchSpec& s, const LabelSpace& labels);

struct Confusion {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::size_t total() const noexcept { return tp + fp + tn + fn; }
    MetricValue f1() const;
    MetricValue precision() const;
    MetricValue recall() const;

    Confusion& operator+=(const Confusion& o);
    friend bool operator==(const Confusion&, const Confusion&) = default;
};

void add_to_confusion(Confusion& c, Label predicted, Label truth, Label positive);

// Metric of the records under thresholds `t`. Records need ground truth.
MetricValue evaluate_thresholds(std::span<const PValueRecord> records, const ThresholdSet& t, Metric metric,
                                Label positive);

struct SearchUpdate {
    std::size_t trial = 0;  // 1-based index of the accepted candidate
    double objective = 0.0;
    double constraint = 0.0;
};

struct SearchResult {
    ThresholdSet thresholds;
    MetricValue objective;
    MetricValue constraint;
    std::size_t trials = 0;
    std::string stop_reason;  // max-iterations | no-update | grid-exhausted
    bool constraint_satisfied = false;
    bool any_feasible_sampled = false;
    std::vector<SearchUpdate> updates;
};

nlohmann::json search_result_to_json(const SearchResult& r, const SearchSpec& spec, const LabelSpace& labels);

// Random search: start from all-zero thresholds, draw candidates uniformly
// from [0,1]^D, accept on (F improves and G >= C) or (F ties and G improves).
// A feasible candidate also replaces an infeasible incumbent.
SearchResult random_search(std::span<const PValueRecord> records, std::size_t num_classes, const SearchSpec& spec,
                           Label positive);

// Grid values {0, step, 2 step, ..., 1}; candidates enumerated
// lexicographically with the last dimension varying fastest.
std::vector<double> grid_values(double step);
double grid_trial_count(double step, std::size_t dims);
SearchResult grid_search(std::span<const PValueRecord> records, std::size_t num_classes, const SearchSpec& spec,
                         Label positive, double step);

// Maps raw per-class classifier scores to [0,1] by rank against a reference
// set: normalized_c(s) = |{r in R_c : r <= s}| / |R_c|.
class RankNormalizer {
public:
    RankNormalizer() = default;
    // R_c = raw score of class c over every record.
    explicit RankNormalizer(std::span<const PValueRecord> reference, std::size_t num_classes);
    explicit RankNormalizer(std::vector<std::vector<double>> sorted_reference)
        : sorted_(std::move(sorted_reference)) {}

    double normalize(Label c, double raw) const;
    std::vector<double> normalize(std::span<const double> raw) const;
    const std::vector<std::vector<double>>& reference() const noexcept { return sorted_; }

private:
    std::vector<std::vector<double>> sorted_;
};

// Records whose p-values are replaced by rank-normalized raw scores.
std::vector<PValueRecord> probability_records(std::span<const PValueRecord> records, const RankNormalizer& norm);

// Search on rank-normalized raw scores instead of p-values.
SearchResult threshold_on_probabilities(std::span<const PValueRecord> records, std::size_t num_classes,
                                        const SearchSpec& spec, Label positive);

}  // namespace confeval
