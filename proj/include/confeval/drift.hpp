#pragma once

#include "confeval/dataset.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace confeval {

struct MixtureComponent {
    std::vector<double> mean;
    std::vector<double> variance;  // diagonal
    double weight = 1.0;
    // Added to the mean once per period on top of the class-level shift.
    std::vector<double> shift_per_period;
};

struct ClassDrift {
    std::string label;
    std::vector<MixtureComponent> components;
    // Mean translation per period (period p adds p * shift_per_period).
    std::vector<double> shift_per_period;
    // Optional explicit offset per period; overrides nothing, adds to the
    // linear shift. Either empty or one vector per period.
    std::vector<std::vector<double>> period_offsets;
};

// Gaussian-mixture stream whose class means translate over time. Benign data
// is stationary unless a shift is configured for it.
struct DriftConfig {
    std::size_t dimensionality = 0;
    std::vector<ClassDrift> classes;
    // Class priors, either one row for all periods or one row per period.
    std::vector<std::vector<double>> priors;
    std::size_t examples_per_period = 0;
    std::size_t periods = 0;
    std::int64_t start_timestamp = 0;
    std::int64_t period_seconds = 2592000;

    void validate() const;  // throws ConfigError
};

DriftConfig drift_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DriftConfig& cfg);

// Mean of a component during a period, shifts included.
std::vector<double> component_mean(const DriftConfig& cfg, std::size_t cls, std::size_t component,
                                   std::size_t period);

// Example i of period p gets timestamp start + p * period_seconds +
// i * (period_seconds / examples_per_period) and id `p<p>-<i>`.
Dataset generate_drift_stream(const DriftConfig& cfg, std::uint64_t seed);

}  // namespace confeval
