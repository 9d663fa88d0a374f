#include "confeval/classifiers.hpp"

#include "confeval/error.hpp"
#include "confeval/random.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace confeval {

using nlohmann::json;

namespace {

void require_labeled(const Dataset& train, const char* who) {
    if (train.empty()) throw TrainingError(std::string(who) + ": empty training set");
    for (const auto& e : train) {
        if (!e.label) throw TrainingError(std::string(who) + ": training example '" + e.id + "' has no label");
    }
}

json sparse_to_json(const SparseVector& x) {
    json out = json::array();
    for (const auto& f : x) out.push_back({f.index, f.value});
    return out;
}

SparseVector sparse_from_json(const json& j) {
    SparseVector out;
    for (const auto& p : j) out.push_back({p.at(0).get<std::uint32_t>(), p.at(1).get<double>()});
    return out;
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            out.push_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        ++line_no;
        auto line = text.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!line.empty()) fn(line_no, line);
        pos = nl + 1;
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IntegrityError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

json dataset_to_json(const Dataset& d) {
    json examples = json::array();
    for (const auto& e : d) {
        json ej = {{"id", e.id}, {"timestamp", e.timestamp}, {"features", sparse_to_json(e.features)}};
        ej["label"] = e.label ? json(*e.label) : json(nullptr);
        examples.push_back(std::move(ej));
    }
    return {{"labels", d.labels().names()}, {"dimensionality", d.dimensionality()}, {"examples", std::move(examples)}};
}

Dataset dataset_from_json(const json& j) {
    std::vector<Example> examples;
    for (const auto& ej : j.at("examples")) {
        Example e;
        e.id = ej.at("id").get<std::string>();
        e.timestamp = ej.at("timestamp").get<std::int64_t>();
        e.features = sparse_from_json(ej.at("features"));
        if (!ej.at("label").is_null()) e.label = ej.at("label").get<Label>();
        examples.push_back(std::move(e));
    }
    return Dataset(LabelSpace(j.at("labels").get<std::vector<std::string>>()),
                   j.at("dimensionality").get<std::size_t>(), std::move(examples));
}

Label argmax_first(std::span<const double> scores) {
    if (scores.empty()) throw DomainError("argmax of an empty score vector");
    Label best = 0;
    for (Label c = 1; c < scores.size(); ++c) {
        if (scores[c] > scores[best]) best = c;
    }
    return best;
}

// ------------------------------------------------------------ nearest centroid

std::vector<double> mean_vector(std::span<const Example* const> members, std::size_t dimensionality) {
    if (members.empty()) throw DomainError("mean of an empty bag");
    std::vector<double> sum(dimensionality, 0.0);
    for (const Example* e : members) {
        for (const auto& f : e->features) {
            if (f.index >= dimensionality) throw DimensionError("feature index beyond dimensionality");
            sum[f.index] += f.value;
        }
    }
    const double n = static_cast<double>(members.size());
    for (auto& v : sum) v /= n;
    return sum;
}

NearestCentroidModel::NearestCentroidModel(LabelSpace labels, std::vector<std::vector<double>> centroids)
    : ScoringModel(std::move(labels)), centroids_(std::move(centroids)) {
    if (centroids_.size() != this->labels().size()) throw DomainError("one centroid per class required");
}

std::vector<double> NearestCentroidModel::scores(const Example& z) const {
    std::vector<double> out(centroids_.size());
    for (Label c = 0; c < centroids_.size(); ++c) {
        out[c] = -std::sqrt(squared_distance(z.features, centroids_[c]));
    }
    return out;
}

json NearestCentroidModel::to_json() const {
    return {{"kind", kind()}, {"labels", labels().names()}, {"centroids", centroids_}};
}

std::shared_ptr<const NearestCentroidModel> fit_nearest_centroid(const Dataset& train) {
    require_labeled(train, "nearest centroid");
    std::vector<std::vector<const Example*>> members(train.labels().size());
    for (const auto& e : train) members[*e.label].push_back(&e);
    std::vector<std::vector<double>> centroids;
    for (Label c = 0; c < members.size(); ++c) {
        if (members[c].empty()) {
            throw TrainingError("nearest centroid: class '" + train.labels().name(c) + "' has no training examples");
        }
        centroids.push_back(mean_vector(members[c], train.dimensionality()));
    }
    return std::make_shared<NearestCentroidModel>(train.labels(), std::move(centroids));
}

// ------------------------------------------------------------------ k-NN

KnnIndex::KnnIndex(Dataset bag) : bag_(std::move(bag)) {}

std::vector<Neighbor> KnnIndex::nearest(const SparseVector& x, std::size_t k,
                                        std::optional<std::size_t> exclude) const {
    const std::size_t available = bag_.size() - (exclude && *exclude < bag_.size() ? 1 : 0);
    if (k == 0 || k > available) {
        throw ConfigError("k = " + std::to_string(k) + " but only " + std::to_string(available) +
                          " neighbors are available");
    }
    std::vector<Neighbor> all;
    all.reserve(bag_.size());
    for (std::size_t i = 0; i < bag_.size(); ++i) {
        if (exclude && *exclude == i) continue;
        all.push_back({i, squared_distance(x, bag_[i].features)});
    }
    auto closer = [](const Neighbor& a, const Neighbor& b) {
        return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
    };
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), closer);
    all.resize(k);
    for (auto& n : all) n.distance = std::sqrt(n.distance);
    return all;
}

std::vector<Label> KnnIndex::neighbor_labels(const SparseVector& x, std::size_t k,
                                             std::optional<std::size_t> exclude) const {
    std::vector<Label> out;
    for (const auto& n : nearest(x, k, exclude)) {
        const auto& lbl = bag_[n.index].label;
        if (!lbl) throw DomainError("k-NN bag member '" + bag_[n.index].id + "' has no label");
        out.push_back(*lbl);
    }
    return out;
}

KnnModel::KnnModel(Dataset train, std::size_t k)
    : ScoringModel(train.labels()), index_(std::move(train)), k_(k) {
    if (k_ == 0 || k_ > index_.bag().size()) {
        throw ConfigError("k-NN: k = " + std::to_string(k_) + " must be in [1, " +
                          std::to_string(index_.bag().size()) + "]");
    }
}

std::vector<double> KnnModel::scores(const Example& z) const {
    std::vector<double> out(labels().size(), 0.0);
    for (Label l : index_.neighbor_labels(z.features, k_)) out[l] += 1.0;
    for (auto& v : out) v /= static_cast<double>(k_);
    return out;
}

std::optional<std::vector<Label>> KnnModel::member_votes(const Example& z) const {
    return index_.neighbor_labels(z.features, k_);
}

json KnnModel::to_json() const {
    return {{"kind", kind()}, {"k", k_}, {"train", dataset_to_json(index_.bag())}};
}

std::shared_ptr<const KnnModel> fit_knn(const Dataset& train, std::size_t k) {
    if (k == 0 || k > train.size()) {
        throw ConfigError("k-NN: k = " + std::to_string(k) + " must be in [1, " + std::to_string(train.size()) + "]");
    }
    require_labeled(train, "k-NN");
    return std::make_shared<KnnModel>(train, k);
}

// ------------------------------------------------------------ linear SVM

LinearModel::LinearModel(LabelSpace labels, std::vector<double> weights, double bias, LinearSvmParams params)
    : ScoringModel(std::move(labels)), weights_(std::move(weights)), bias_(bias), params_(params) {
    if (this->labels().size() != 2) throw ConfigError("linear model needs exactly two classes");
}

double LinearModel::margin(const Example& z) const {
    return dot(z.features, weights_) + bias_;
}

std::vector<double> LinearModel::scores(const Example& z) const {
    const double m = margin(z);
    return {-m, m};
}

double LinearModel::weight_norm() const {
    double s = 0.0;
    for (double w : weights_) s += w * w;
    return std::sqrt(s);
}

json LinearModel::to_json() const {
    return {{"kind", kind()},
            {"labels", labels().names()},
            {"weights", weights_},
            {"bias", bias_},
            {"lambda", params_.lambda},
            {"epochs", params_.epochs},
            {"seed", params_.seed}};
}

std::shared_ptr<const LinearModel> fit_linear_svm(const Dataset& train, const LinearSvmParams& params) {
    if (train.labels().size() != 2) {
        throw ConfigError("linear SVM supports exactly two classes, got " + std::to_string(train.labels().size()));
    }
    if (!(params.lambda > 0.0)) throw ConfigError("linear SVM: lambda must be positive");
    if (params.epochs == 0) throw ConfigError("linear SVM: epochs must be at least 1");
    require_labeled(train, "linear SVM");
    const auto counts = train.class_counts();
    if (counts[0] == 0 || counts[1] == 0) {
        throw TrainingError("linear SVM: all training labels are identical");
    }

    // w is stored as scale * v so the per-step shrink is O(1).
    const std::size_t dim = train.dimensionality();
    std::vector<double> v(dim, 0.0);
    double v_bias = 0.0;
    double scale = 1.0;

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(params.seed);
    std::uint64_t t = 0;
    for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t i : order) {
            ++t;
            const double eta = 1.0 / (params.lambda * static_cast<double>(t));
            const auto& e = train[i];
            const double y = *e.label == 1 ? 1.0 : -1.0;
            const double m = y * scale * (dot(e.features, v) + v_bias);
            const double shrink = 1.0 - eta * params.lambda;
            if (shrink <= 0.0) {
                std::fill(v.begin(), v.end(), 0.0);
                v_bias = 0.0;
                scale = 1.0;
            } else {
                scale *= shrink;
            }
            if (m < 1.0) {
                const double step = eta * y / scale;
                for (const auto& f : e.features) v[f.index] += step * f.value;
                v_bias += step;
            }
            if (scale < 1e-9) {
                for (auto& x : v) x *= scale;
                v_bias *= scale;
                scale = 1.0;
            }
        }
    }
    for (auto& x : v) x *= scale;
    return std::make_shared<LinearModel>(train.labels(), std::move(v), v_bias * scale, params);
}

// ------------------------------------------------------- external scores

ExternalScores ExternalScores::aligned_to(const LabelSpace& target) const {
    if (target == labels) return *this;
    std::vector<std::size_t> column(target.size());
    for (Label c = 0; c < target.size(); ++c) {
        auto src = labels.find(target.name(c));
        if (!src) throw LookupError("external scores have no column for class '" + target.name(c) + "'");
        column[c] = *src;
    }
    ExternalScores out;
    out.labels = target;
    for (const auto& [id, row] : scores) {
        std::vector<double> r(target.size());
        for (Label c = 0; c < target.size(); ++c) r[c] = row[column[c]];
        out.scores.emplace(id, std::move(r));
    }
    for (const auto& [id, row] : votes) {
        std::vector<Label> r;
        for (Label l : row) {
            auto mapped = target.find(labels.name(l));
            if (!mapped) throw LookupError("vote for class '" + labels.name(l) + "' outside the target label space");
            r.push_back(*mapped);
        }
        out.votes.emplace(id, std::move(r));
    }
    return out;
}

ExternalScores parse_external_scores(std::string_view text) {
    ExternalScores table;
    bool header = true;
    for_each_line(text, [&](std::size_t line_no, std::string_view line) {
        auto cells = split_csv(line);
        if (header) {
            if (cells.size() < 2 || cells[0] != "id") throw ParseError(line_no, "header must be id,<class1>,...");
            std::vector<std::string> names;
            for (std::size_t i = 1; i < cells.size(); ++i) names.emplace_back(cells[i]);
            try {
                table.labels = LabelSpace(std::move(names));
            } catch (const DomainError& e) {
                throw ParseError(line_no, e.what());
            }
            header = false;
            return;
        }
        if (cells.size() != table.labels.size() + 1) throw ParseError(line_no, "wrong column count");
        std::vector<double> row;
        for (std::size_t i = 1; i < cells.size(); ++i) {
            double v{};
            auto [ptr, ec] = std::from_chars(cells[i].data(), cells[i].data() + cells[i].size(), v);
            if (ec != std::errc{} || ptr != cells[i].data() + cells[i].size() || cells[i].empty()) {
                throw ParseError(line_no, "non-numeric score '" + std::string(cells[i]) + "'");
            }
            row.push_back(v);
        }
        if (!table.scores.emplace(std::string(cells[0]), std::move(row)).second) {
            throw IntegrityError("line " + std::to_string(line_no) + ": duplicate id '" + std::string(cells[0]) + "'");
        }
    });
    if (header) throw ParseError(1, "missing header");
    return table;
}

ExternalScores load_external_scores(const std::filesystem::path& path) {
    return parse_external_scores(read_file(path));
}

void parse_external_votes(ExternalScores& table, std::string_view text) {
    for_each_line(text, [&](std::size_t line_no, std::string_view line) {
        auto cells = split_csv(line);
        if (line_no == 1 && cells[0] == "id") return;
        if (cells.size() < 2) throw ParseError(line_no, "expected id followed by at least one vote");
        std::vector<Label> votes;
        for (std::size_t i = 1; i < cells.size(); ++i) {
            auto l = table.labels.find(cells[i]);
            if (!l) throw ParseError(line_no, "vote for unknown class '" + std::string(cells[i]) + "'");
            votes.push_back(*l);
        }
        table.votes[std::string(cells[0])] = std::move(votes);
    });
}

void load_external_votes(ExternalScores& table, const std::filesystem::path& path) {
    parse_external_votes(table, read_file(path));
}

ExternalScoresModel::ExternalScoresModel(ExternalScores table)
    : ScoringModel(table.labels), table_(std::move(table)) {
    for (const auto& [id, row] : table_.scores) {
        if (row.size() != labels().size()) throw IntegrityError("external scores for '" + id + "' have wrong width");
    }
}

std::vector<double> ExternalScoresModel::scores(const Example& z) const {
    auto it = table_.scores.find(z.id);
    if (it == table_.scores.end()) throw LookupError("no external scores for example '" + z.id + "'");
    return it->second;
}

std::optional<std::vector<Label>> ExternalScoresModel::member_votes(const Example& z) const {
    auto it = table_.votes.find(z.id);
    if (it == table_.votes.end()) return std::nullopt;
    return it->second;
}

json ExternalScoresModel::to_json() const {
    // Sorted ids keep the serialized state byte-stable.
    std::vector<std::string> ids;
    for (const auto& [id, row] : table_.scores) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    json scores = json::object();
    for (const auto& id : ids) scores[id] = table_.scores.at(id);
    json votes = json::object();
    for (const auto& [id, row] : table_.votes) votes[id] = row;
    return {{"kind", kind()}, {"labels", labels().names()}, {"scores", std::move(scores)}, {"votes", std::move(votes)}};
}

std::shared_ptr<const ExternalScoresModel> wrap_external_scores(ExternalScores table) {
    return std::make_shared<ExternalScoresModel>(std::move(table));
}

ModelPtr model_from_json(const json& j) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "nearest-centroid") {
        return std::make_shared<NearestCentroidModel>(LabelSpace(j.at("labels").get<std::vector<std::string>>()),
                                                      j.at("centroids").get<std::vector<std::vector<double>>>());
    }
    if (kind == "knn") {
        return std::make_shared<KnnModel>(dataset_from_json(j.at("train")), j.at("k").get<std::size_t>());
    }
    if (kind == "linear-svm") {
        LinearSvmParams p;
        p.lambda = j.at("lambda").get<double>();
        p.epochs = j.at("epochs").get<std::size_t>();
        p.seed = j.at("seed").get<std::uint64_t>();
        return std::make_shared<LinearModel>(LabelSpace(j.at("labels").get<std::vector<std::string>>()),
                                             j.at("weights").get<std::vector<double>>(), j.at("bias").get<double>(), p);
    }
    if (kind == "external") {
        ExternalScores t;
        t.labels = LabelSpace(j.at("labels").get<std::vector<std::string>>());
        for (const auto& [id, row] : j.at("scores").items()) t.scores.emplace(id, row.get<std::vector<double>>());
        for (const auto& [id, row] : j.at("votes").items()) t.votes.emplace(id, row.get<std::vector<Label>>());
        return std::make_shared<ExternalScoresModel>(std::move(t));
    }
    throw IntegrityError("unknown model kind '" + kind + "' in saved state");
}

}  // namespace confeval
