#pragma once

#include "confeval/classifiers.hpp"
#include "confeval/dataset.hpp"

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace confeval {

// Nonconformity measures: larger output means z is less similar to class c.

// Euclidean distance from z to the mean of `bag` (one class).
double ncm_centroid(std::span<const Example> bag, const Example& z);
// -scores(z)[c].
double ncm_signed_score(const ScoringModel& model, Label c, const Example& z);
// -|w.x + b| / ||w||; the class argument does not change the result.
double ncm_abs_margin(const LinearModel& model, Label c, const Example& z);
// Fraction of z's k nearest neighbors in `context` whose label differs from c.
double ncm_knn_disagreement(const KnnIndex& context, Label c, const Example& z, std::size_t k);
// Fraction of ensemble members that did not vote for c.
double ncm_ensemble_disagreement(std::span<const Label> votes, Label c);

// An NCM bound to a fitted model and a bag snapshot. Immutable; thread-safe.
class NcmContext {
public:
    virtual ~NcmContext() = default;

    // A(B, z) for an example outside the bag.
    virtual double score(Label c, const Example& z) const = 0;
    // A(B \ {z_i}, z_i) for member i of the bag.
    virtual double score_member(Label c, std::size_t member) const = 0;

    virtual nlohmann::json to_json() const = 0;
};

using NcmContextPtr = std::shared_ptr<const NcmContext>;

struct NcmOptions {
    std::size_t k = 5;  // neighbours for knn-disagreement
};

class Ncm {
public:
    virtual ~Ncm() = default;

    virtual std::string name() const = 0;
    // `bag` is the labeled set the NCM compares against; model-based NCMs
    // only use it to resolve score_member().
    virtual NcmContextPtr bind(ModelPtr model, std::shared_ptr<const Dataset> bag) const = 0;
    // Rebuilds a context from to_json(). The restored context scores new
    // examples; score_member() throws StateError.
    virtual NcmContextPtr restore(const nlohmann::json& j, ModelPtr model) const = 0;
    virtual nlohmann::json options_json() const { return nlohmann::json::object(); }
};

using NcmPtr = std::shared_ptr<const Ncm>;

// `centroid | signed-score | abs-margin | knn-disagreement | ensemble-disagreement`;
// unknown names throw ConfigError.
NcmPtr make_ncm(std::string_view name, const NcmOptions& options = {});
const std::vector<std::string>& ncm_names();

}  // namespace confeval
