#include "confeval/ncm.hpp"

#include "confeval/error.hpp"

#include <cmath>

namespace confeval {

using nlohmann::json;

double ncm_centroid(std::span<const Example> bag, const Example& z) {
    if (bag.empty()) throw DomainError("centroid NCM needs a non-empty bag");
    std::size_t dims = 0;
    std::vector<const Example*> members;
    members.reserve(bag.size());
    for (const auto& e : bag) {
        members.push_back(&e);
        if (!e.features.empty()) dims = std::max<std::size_t>(dims, e.features.back().index + 1);
    }
    return std::sqrt(squared_distance(z.features, mean_vector(members, dims)));
}

double ncm_signed_score(const ScoringModel& model, Label c, const Example& z) {
    if (c >= model.labels().size()) throw DomainError("signed-score NCM: unknown class index " + std::to_string(c));
    return -model.scores(z)[c];
}

double ncm_abs_margin(const LinearModel& model, Label c, const Example& z) {
    if (c >= model.labels().size()) throw DomainError("abs-margin NCM: unknown class index " + std::to_string(c));
    const double norm = model.weight_norm();
    if (!(norm > 0.0)) throw DomainError("abs-margin NCM: zero weight vector");
    return -std::abs(model.margin(z)) / norm;
}

double ncm_knn_disagreement(const KnnIndex& context, Label c, const Example& z, std::size_t k) {
    const auto labels = context.neighbor_labels(z.features, k);
    std::size_t other = 0;
    for (Label l : labels) other += (l != c);
    return static_cast<double>(other) / static_cast<double>(labels.size());
}

double ncm_ensemble_disagreement(std::span<const Label> votes, Label c) {
    if (votes.empty()) throw DomainError("ensemble-disagreement NCM: empty vote list");
    std::size_t other = 0;
    for (Label l : votes) other += (l != c);
    return static_cast<double>(other) / static_cast<double>(votes.size());
}

namespace {

const Example& bag_member(const std::shared_ptr<const Dataset>& bag, std::size_t i) {
    if (!bag) throw StateError("NCM context restored from saved state has no bag");
    if (i >= bag->size()) throw DomainError("bag member index out of range");
    return (*bag)[i];
}

// ------------------------------------------------------------------ centroid

class CentroidContext final : public NcmContext {
public:
    explicit CentroidContext(std::shared_ptr<const Dataset> bag) : bag_(std::move(bag)) {
        const auto& labels = bag_->labels();
        members_.resize(labels.size());
        for (std::size_t i = 0; i < bag_->size(); ++i) {
            const auto& e = (*bag_)[i];
            if (e.label) members_[*e.label].push_back(i);
        }
        centroids_.resize(labels.size());
        for (Label c = 0; c < labels.size(); ++c) {
            if (!members_[c].empty()) centroids_[c] = centroid_without(c, std::nullopt);
        }
    }

    CentroidContext(std::vector<std::vector<double>> centroids) : centroids_(std::move(centroids)) {}

    double score(Label c, const Example& z) const override {
        return std::sqrt(squared_distance(z.features, centroid(c)));
    }

    double score_member(Label c, std::size_t member) const override {
        const auto& e = bag_member(bag_, member);
        if (e.label && *e.label == c) {
            return std::sqrt(squared_distance(e.features, centroid_without(c, member)));
        }
        return score(c, e);
    }

    json to_json() const override { return {{"centroids", centroids_}}; }

private:
    const std::vector<double>& centroid(Label c) const {
        if (c >= centroids_.size() || centroids_[c].empty()) {
            throw DomainError("centroid NCM: no bag members for class index " + std::to_string(c));
        }
        return centroids_[c];
    }

    std::vector<double> centroid_without(Label c, std::optional<std::size_t> skip) const {
        std::vector<const Example*> ptrs;
        ptrs.reserve(members_[c].size());
        for (auto i : members_[c]) {
            if (skip && *skip == i) continue;
            ptrs.push_back(&(*bag_)[i]);
        }
        if (ptrs.empty()) {
            throw DomainError("centroid NCM: class '" + bag_->labels().name(c) +
                              "' has no bag members once the scored example is left out");
        }
        return mean_vector(ptrs, bag_->dimensionality());
    }

    std::shared_ptr<const Dataset> bag_;
    std::vector<std::vector<std::size_t>> members_;
    std::vector<std::vector<double>> centroids_;
};

class CentroidNcm final : public Ncm {
public:
    std::string name() const override { return "centroid"; }
    NcmContextPtr bind(ModelPtr, std::shared_ptr<const Dataset> bag) const override {
        return std::make_shared<CentroidContext>(std::move(bag));
    }
    NcmContextPtr restore(const json& j, ModelPtr) const override {
        return std::make_shared<CentroidContext>(j.at("centroids").get<std::vector<std::vector<double>>>());
    }
};

// ------------------------------------------------------------- model based

class SignedScoreContext final : public NcmContext {
public:
    SignedScoreContext(ModelPtr model, std::shared_ptr<const Dataset> bag)
        : model_(std::move(model)), bag_(std::move(bag)) {
        if (!model_) throw DomainError("signed-score NCM needs a fitted model");
    }
    double score(Label c, const Example& z) const override { return ncm_signed_score(*model_, c, z); }
    double score_member(Label c, std::size_t member) const override {
        return score(c, bag_member(bag_, member));
    }
    json to_json() const override { return json::object(); }

private:
    ModelPtr model_;
    std::shared_ptr<const Dataset> bag_;
};

class SignedScoreNcm final : public Ncm {
public:
    std::string name() const override { return "signed-score"; }
    NcmContextPtr bind(ModelPtr model, std::shared_ptr<const Dataset> bag) const override {
        return std::make_shared<SignedScoreContext>(std::move(model), std::move(bag));
    }
    NcmContextPtr restore(const json&, ModelPtr model) const override {
        return std::make_shared<SignedScoreContext>(std::move(model), nullptr);
    }
};

class AbsMarginContext final : public NcmContext {
public:
    AbsMarginContext(ModelPtr model, std::shared_ptr<const Dataset> bag) : bag_(std::move(bag)) {
        model_ = std::dynamic_pointer_cast<const LinearModel>(model);
        if (!model_) throw DomainError("abs-margin NCM needs a binary linear model");
    }
    double score(Label c, const Example& z) const override { return ncm_abs_margin(*model_, c, z); }
    double score_member(Label c, std::size_t member) const override {
        return score(c, bag_member(bag_, member));
    }
    json to_json() const override { return json::object(); }

private:
    std::shared_ptr<const LinearModel> model_;
    std::shared_ptr<const Dataset> bag_;
};

class AbsMarginNcm final : public Ncm {
public:
    std::string name() const override { return "abs-margin"; }
    NcmContextPtr bind(ModelPtr model, std::shared_ptr<const Dataset> bag) const override {
        return std::make_shared<AbsMarginContext>(std::move(model), std::move(bag));
    }
    NcmContextPtr restore(const json&, ModelPtr model) const override {
        return std::make_shared<AbsMarginContext>(std::move(model), nullptr);
    }
};

class EnsembleContext final : public NcmContext {
public:
    EnsembleContext(ModelPtr model, std::shared_ptr<const Dataset> bag)
        : model_(std::move(model)), bag_(std::move(bag)) {
        if (!model_) throw DomainError("ensemble-disagreement NCM needs a fitted model");
    }
    double score(Label c, const Example& z) const override {
        auto votes = model_->member_votes(z);
        if (!votes) {
            throw DomainError("ensemble-disagreement NCM: model '" + model_->kind() +
                              "' exposes no member votes for '" + z.id + "'");
        }
        return ncm_ensemble_disagreement(*votes, c);
    }
    double score_member(Label c, std::size_t member) const override {
        return score(c, bag_member(bag_, member));
    }
    json to_json() const override { return json::object(); }

private:
    ModelPtr model_;
    std::shared_ptr<const Dataset> bag_;
};

class EnsembleNcm final : public Ncm {
public:
    std::string name() const override { return "ensemble-disagreement"; }
    NcmContextPtr bind(ModelPtr model, std::shared_ptr<const Dataset> bag) const override {
        return std::make_shared<EnsembleContext>(std::move(model), std::move(bag));
    }
    NcmContextPtr restore(const json&, ModelPtr model) const override {
        return std::make_shared<EnsembleContext>(std::move(model), nullptr);
    }
};

// -------------------------------------------------------------------- k-NN

class KnnContext final : public NcmContext {
public:
    KnnContext(Dataset bag, std::size_t k) : index_(std::move(bag)), k_(k) {
        if (k_ == 0 || k_ > index_.bag().size()) {
            throw ConfigError("knn-disagreement NCM: k = " + std::to_string(k_) + " but the context holds " +
                              std::to_string(index_.bag().size()) + " examples");
        }
    }
    double score(Label c, const Example& z) const override {
        return ncm_knn_disagreement(index_, c, z, k_);
    }
    double score_member(Label c, std::size_t member) const override {
        if (member >= index_.bag().size()) throw DomainError("bag member index out of range");
        const auto labels = index_.neighbor_labels(index_.bag()[member].features, k_, member);
        std::size_t other = 0;
        for (Label l : labels) other += (l != c);
        return static_cast<double>(other) / static_cast<double>(labels.size());
    }
    json to_json() const override { return {{"k", k_}, {"bag", dataset_to_json(index_.bag())}}; }

private:
    KnnIndex index_;
    std::size_t k_;
};

class KnnNcm final : public Ncm {
public:
    explicit KnnNcm(std::size_t k) : k_(k) {}
    std::string name() const override { return "knn-disagreement"; }
    NcmContextPtr bind(ModelPtr, std::shared_ptr<const Dataset> bag) const override {
        return std::make_shared<KnnContext>(*bag, k_);
    }
    NcmContextPtr restore(const json& j, ModelPtr) const override {
        return std::make_shared<KnnContext>(dataset_from_json(j.at("bag")), j.at("k").get<std::size_t>());
    }
    json options_json() const override { return {{"k", k_}}; }

private:
    std::size_t k_;
};

}  // namespace

const std::vector<std::string>& ncm_names() {
    static const std::vector<std::string> names = {"centroid", "signed-score", "abs-margin", "knn-disagreement",
                                                   "ensemble-disagreement"};
    return names;
}

NcmPtr make_ncm(std::string_view name, const NcmOptions& options) {
    if (name == "centroid") return std::make_shared<CentroidNcm>();
    if (name == "signed-score") return std::make_shared<SignedScoreNcm>();
    if (name == "abs-margin") return std::make_shared<AbsMarginNcm>();
    if (name == "knn-disagreement") {
        if (options.k == 0) throw ConfigError("ncm.k must be at least 1");
        return std::make_shared<KnnNcm>(options.k);
    }
    if (name == "ensemble-disagreement") return std::make_shared<EnsembleNcm>();
    throw ConfigError("ncm.name: unknown NCM '" + std::string(name) +
                      "' (expected centroid, signed-score, abs-margin, knn-disagreement or ensemble-disagreement)");
}

}  // namespace confeval
