#pragma once

#include "confeval/dataset.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace confeval {

// First index holding the maximum; ties go to the earliest label.
Label argmax_first(std::span<const double> scores);

// Anything that exposes per-class decision scores. Implementations are
// immutable after construction; scores() and predict() are thread-safe.
class ScoringModel {
public:
    virtual ~ScoringModel() = default;

    const LabelSpace& labels() const noexcept { return labels_; }

    // One score per class of labels(); larger means more likely.
    virtual std::vector<double> scores(const Example& z) const = 0;
    Label predict(const Example& z) const { return argmax_first(scores(z)); }

    // Per-member votes for ensemble-style models; nullopt otherwise.
    virtual std::optional<std::vector<Label>> member_votes(const Example&) const { return std::nullopt; }

    virtual std::string kind() const = 0;
    virtual nlohmann::json to_json() const = 0;

protected:
    explicit ScoringModel(LabelSpace labels) : labels_(std::move(labels)) {}

private:
    LabelSpace labels_;
};

using ModelPtr = std::shared_ptr<const ScoringModel>;
// Fits a model on a training set. Must be deterministic and thread-safe.
using ModelFactory = std::function<ModelPtr(const Dataset& train)>;

// ------------------------------------------------------------ nearest centroid

class NearestCentroidModel final : public ScoringModel {
public:
    NearestCentroidModel(LabelSpace labels, std::vector<std::vector<double>> centroids);

    // scores(x)[c] = -||x - centroid_c||
    std::vector<double> scores(const Example& z) const override;
    const std::vector<double>& centroid(Label c) const { return centroids_.at(c); }

    std::string kind() const override { return "nearest-centroid"; }
    nlohmann::json to_json() const override;

private:
    std::vector<std::vector<double>> centroids_;
};

// Mean of the given examples, summed in the given order then divided.
std::vector<double> mean_vector(std::span<const Example* const> members, std::size_t dimensionality);

std::shared_ptr<const NearestCentroidModel> fit_nearest_centroid(const Dataset& train);

// ------------------------------------------------------------------ k-NN

struct Neighbor {
    std::size_t index;
    double distance;
};

// Labeled bag searched by Euclidean distance. Ties are broken by insertion
// order.
class KnnIndex {
public:
    KnnIndex() = default;
    explicit KnnIndex(Dataset bag);

    const Dataset& bag() const noexcept { return bag_; }
    // k nearest members of the bag, optionally skipping one member.
    std::vector<Neighbor> nearest(const SparseVector& x, std::size_t k,
                                  std::optional<std::size_t> exclude = std::nullopt) const;
    // Labels of the neighbors returned by nearest().
    std::vector<Label> neighbor_labels(const SparseVector& x, std::size_t k,
                                       std::optional<std::size_t> exclude = std::nullopt) const;

private:
    Dataset bag_;
};

class KnnModel final : public ScoringModel {
public:
    KnnModel(Dataset train, std::size_t k);

    // scores(x)[c] = fraction of the k nearest neighbors labeled c
    std::vector<double> scores(const Example& z) const override;
    // Neighbor labels act as the members of a voting ensemble.
    std::optional<std::vector<Label>> member_votes(const Example& z) const override;

    std::size_t k() const noexcept { return k_; }
    const KnnIndex& index() const noexcept { return index_; }

    std::string kind() const override { return "knn"; }
    nlohmann::json to_json() const override;

private:
    KnnIndex index_;
    std::size_t k_;
};

std::shared_ptr<const KnnModel> fit_knn(const Dataset& train, std::size_t k);

// ------------------------------------------------------------ linear SVM

struct LinearSvmParams {
    double lambda = 1e-4;
    std::size_t epochs = 10;
    std::uint64_t seed = 0;
};

// Binary linear model: scores = {labels[0]: -(w.x + b), labels[1]: w.x + b}.
class LinearModel final : public ScoringModel {
public:
    LinearModel(LabelSpace labels, std::vector<double> weights, double bias, LinearSvmParams params = {});

    std::vector<double> scores(const Example& z) const override;
    double margin(const Example& z) const;  // w.x + b

    const std::vector<double>& weights() const noexcept { return weights_; }
    double bias() const noexcept { return bias_; }
    double weight_norm() const;
    const LinearSvmParams& params() const noexcept { return params_; }

    std::string kind() const override { return "linear-svm"; }
    nlohmann::json to_json() const override;

private:
    std::vector<double> weights_;
    double bias_;
    LinearSvmParams params_;
};

// Hinge loss with L2 regularization, stochastic subgradient steps 1/(lambda t).
// The bias is trained as the weight of a constant feature.
std::shared_ptr<const LinearModel> fit_linear_svm(const Dataset& train, const LinearSvmParams& params);

// ------------------------------------------------------- external scores

struct ExternalScores {
    LabelSpace labels;
    std::unordered_map<std::string, std::vector<double>> scores;      // id -> per-class score
    std::unordered_map<std::string, std::vector<Label>> votes;        // id -> member votes (optional)

    // Same table with columns reordered to `target` (matched by name).
    ExternalScores aligned_to(const LabelSpace& target) const;
};

// CSV `id,<class1>,<class2>,...`.
ExternalScores load_external_scores(const std::filesystem::path& path);
ExternalScores parse_external_scores(std::string_view text);
// CSV `id,<vote>,<vote>,...` merged into an existing table.
void parse_external_votes(ExternalScores& table, std::string_view text);
void load_external_votes(ExternalScores& table, const std::filesystem::path& path);

class ExternalScoresModel final : public ScoringModel {
public:
    explicit ExternalScoresModel(ExternalScores table);

    std::vector<double> scores(const Example& z) const override;  // throws LookupError
    std::optional<std::vector<Label>> member_votes(const Example& z) const override;

    std::string kind() const override { return "external"; }
    nlohmann::json to_json() const override;

private:
    ExternalScores table_;
};

std::shared_ptr<const ExternalScoresModel> wrap_external_scores(ExternalScores table);

ModelPtr model_from_json(const nlohmann::json& j);

// Lossless JSON form of a dataset (used for bag snapshots in saved state).
nlohmann::json dataset_to_json(const Dataset& d);
Dataset dataset_from_json(const nlohmann::json& j);

}  // namespace confeval
