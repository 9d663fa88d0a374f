#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace confeval {

// Index into a LabelSpace.
using Label = std::size_t;

struct Feature {
    std::uint32_t index = 0;
    double value = 0.0;

    friend bool operator==(const Feature&, const Feature&) = default;
};

// Sorted by index, indices unique, no explicit zeros.
using SparseVector = std::vector<Feature>;

// Builds a SparseVector from unordered (index, value) pairs. Zero values are
// dropped; a repeated index throws DomainError.
SparseVector make_sparse(std::vector<Feature> entries);

double dot(const SparseVector& x, std::span<const double> dense);

// Sum over d in [0, dense.size()) of (x_d - dense_d)^2, accumulated in index
// order. Indices of x beyond dense.size() contribute x_d^2.
double squared_distance(const SparseVector& x, std::span<const double> dense);
double squared_distance(const SparseVector& a, const SparseVector& b);

std::vector<double> to_dense(const SparseVector& x, std::size_t dimensionality);

// Ordered set of class names. Datasets build it sorted; other orders can be
// declared explicitly.
class LabelSpace {
public:
    LabelSpace() = default;
    explicit LabelSpace(std::vector<std::string> names);

    std::size_t size() const noexcept { return names_.size(); }
    bool empty() const noexcept { return names_.empty(); }
    const std::string& name(Label l) const { return names_.at(l); }
    const std::vector<std::string>& names() const noexcept { return names_; }
    std::optional<Label> find(std::string_view name) const;
    Label index_of(std::string_view name) const;  // throws LookupError

    friend bool operator==(const LabelSpace&, const LabelSpace&) = default;

private:
    std::vector<std::string> names_;
};

struct Example {
    std::string id;
    SparseVector features;
    std::optional<Label> label;
    std::int64_t timestamp = 0;

    friend bool operator==(const Example&, const Example&) = default;
};

class Dataset {
public:
    Dataset() = default;
    // Validates: unique ids, labels inside the label space, feature indices
    // below dimensionality, sparse vectors well formed.
    Dataset(LabelSpace labels, std::size_t dimensionality, std::vector<Example> examples);

    const LabelSpace& labels() const noexcept { return labels_; }
    std::size_t dimensionality() const noexcept { return dimensionality_; }
    const std::vector<Example>& examples() const noexcept { return examples_; }
    std::size_t size() const noexcept { return examples_.size(); }
    bool empty() const noexcept { return examples_.empty(); }
    const Example& operator[](std::size_t i) const { return examples_[i]; }

    auto begin() const noexcept { return examples_.begin(); }
    auto end() const noexcept { return examples_.end(); }

    // Examples at the given positions, in the given order.
    Dataset subset(std::span<const std::size_t> indices) const;
    // All examples except the given positions, in original order.
    Dataset without(std::span<const std::size_t> indices) const;
    // Same examples re-expressed in another label space (matched by name).
    Dataset relabeled(const LabelSpace& target) const;

    bool fully_labeled() const noexcept;
    // Number of examples per label (unlabeled ignored).
    std::vector<std::size_t> class_counts() const;

    friend bool operator==(const Dataset&, const Dataset&) = default;

private:
    LabelSpace labels_;
    std::size_t dimensionality_ = 0;
    std::vector<Example> examples_;
};

// Helper for building datasets from label names.
struct LabeledRow {
    std::string id;
    std::vector<Feature> features;
    std::optional<std::string> label;
    std::int64_t timestamp = 0;
};
// label_space empty => sorted distinct labels of rows. dimensionality 0 =>
// one past the largest feature index.
Dataset make_dataset(std::vector<LabeledRow> rows, std::size_t dimensionality = 0,
                     LabelSpace label_space = {});

// Dense CSV: header `id,timestamp,label,f0,...,f{d-1}`; empty label cell means
// unlabeled; zero cells are omitted from the sparse maps.
Dataset load_dense_csv(const std::filesystem::path& path);
Dataset parse_dense_csv(std::string_view text);
void save_dense_csv(const Dataset& d, const std::filesystem::path& path);
std::string format_dense_csv(const Dataset& d);

// Sparse text: `label timestamp idx:val ...` per line, `?` for a missing
// label, indices strictly increasing. Ids are assigned as `line-<n>`.
Dataset load_sparse(const std::filesystem::path& path);
Dataset parse_sparse(std::string_view text);
void save_sparse(const Dataset& d, const std::filesystem::path& path);
std::string format_sparse(const Dataset& d);

// Shortest round-trip representation.
std::string format_double(double v);

struct TemporalSplit {
    Dataset train;
    std::int64_t train_end = 0;
    std::int64_t period_length = 0;
    // Half-open windows [period_starts[i], period_starts[i] + period_length).
    std::vector<std::int64_t> period_starts;
    std::vector<Dataset> test_periods;
};

// train = timestamp <= train_end; the rest is cut into consecutive windows
// starting at train_end + 1. Empty trailing windows are dropped, empty
// windows in the middle are kept so period indices stay chronological.
TemporalSplit temporal_split(const Dataset& d, std::int64_t train_end, std::int64_t period_length);

// Per-feature occurrence counts (number of examples with a nonzero value).
std::vector<double> feature_frequencies(const Dataset& d, std::size_t dimensionality = 0);

// KL(P || Q) in nats after adding `smoothing` to every count and normalizing.
double kl_divergence(std::span<const double> p_counts, std::span<const double> q_counts,
                     double smoothing = 1.0);

}  // namespace confeval
