#include "confeval/calibration.hpp"

#include "confeval/error.hpp"
#include "confeval/parallel.hpp"
#include "confeval/random.hpp"

#include <algorithm>
#include <cmath>

namespace confeval {

using nlohmann::json;

// ------------------------------------------------------------- thresholds

ThresholdSet ThresholdSet::zeros(std::size_t num_classes, bool with_confidence) {
    ThresholdSet t;
    t.cred.assign(num_classes, 0.0);
    if (with_confidence) t.conf = std::vector<double>(num_classes, 0.0);
    return t;
}

ThresholdSet ThresholdSet::from_vector(std::span<const double> v, std::size_t num_classes) {
    if (v.size() != num_classes && v.size() != 2 * num_classes) {
        throw DimensionError("threshold vector of length " + std::to_string(v.size()) + " for " +
                             std::to_string(num_classes) + " classes");
    }
    ThresholdSet t;
    t.cred.assign(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(num_classes));
    if (v.size() == 2 * num_classes) {
        t.conf = std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(num_classes), v.end());
    }
    return t;
}

std::vector<double> ThresholdSet::to_vector() const {
    std::vector<double> v = cred;
    if (conf) v.insert(v.end(), conf->begin(), conf->end());
    return v;
}

void ThresholdSet::validate(std::size_t num_classes) const {
    if (cred.size() != num_classes) throw DomainError("credibility thresholds must cover every class");
    if (conf && conf->size() != num_classes) throw DomainError("confidence thresholds must cover every class");
    for (double x : to_vector()) {
        if (!(x >= 0.0 && x <= 1.0)) throw DomainError("threshold outside [0, 1]");
    }
}

json thresholds_to_json(const ThresholdSet& t, const LabelSpace& labels) {
    json cred = json::object();
    for (Label c = 0; c < labels.size(); ++c) cred[labels.name(c)] = t.cred.at(c);
    json out = {{"cred", cred}};
    if (t.conf) {
        json conf = json::object();
        for (Label c = 0; c < labels.size(); ++c) conf[labels.name(c)] = t.conf->at(c);
        out["conf"] = conf;
    } else {
        out["conf"] = nullptr;
    }
    return out;
}

ThresholdSet thresholds_from_json(const json& j, const LabelSpace& labels) {
    auto read = [&](const json& m) {
        std::vector<double> v(labels.size());
        for (Label c = 0; c < labels.size(); ++c) {
            if (!m.contains(labels.name(c))) throw StateError("thresholds: no entry for class '" + labels.name(c) + "'");
            v[c] = m.at(labels.name(c)).get<double>();
        }
        return v;
    };
    ThresholdSet t;
    t.cred = read(j.at("cred"));
    if (j.contains("conf") && !j.at("conf").is_null()) t.conf = read(j.at("conf"));
    t.validate(labels.size());
    return t;
}

bool keep(const PValueRecord& r, const ThresholdSet& t) {
    if (r.credibility < t.cred.at(r.predicted)) return false;
    if (t.conf && r.confidence < t.conf->at(r.predicted)) return false;
    return true;
}

// ----------------------------------------------------------------- metrics

Metric metric_from_name(std::string_view name) {
    if (name == "f1-kept") return Metric::F1Kept;
    if (name == "precision-kept") return Metric::PrecisionKept;
    if (name == "recall-kept") return Metric::RecallKept;
    if (name == "kept-rate") return Metric::KeptRate;
    if (name == "neg-rejection-rate") return Metric::NegRejectionRate;
    throw ConfigError("unknown metric '" + std::string(name) +
                      "' (expected f1-kept, precision-kept, recall-kept, kept-rate or neg-rejection-rate)");
}

std::string metric_name(Metric m) {
    switch (m) {
        case Metric::F1Kept: return "f1-kept";
        case Metric::PrecisionKept: return "precision-kept";
        case Metric::RecallKept: return "recall-kept";
        case Metric::KeptRate: return "kept-rate";
        case Metric::NegRejectionRate: return "neg-rejection-rate";
    }
    return "?";
}

QualityMetric quality_from_name(std::string_view name) {
    if (name == "credibility") return QualityMetric::Credibility;
    if (name == "cred+conf") return QualityMetric::CredConf;
    if (name == "raw-probability") return QualityMetric::RawProbability;
    throw ConfigError("unknown quality metric '" + std::string(name) +
                      "' (expected credibility, cred+conf or raw-probability)");
}

std::string quality_name(QualityMetric q) {
    switch (q) {
        case QualityMetric::Credibility: return "credibility";
        case QualityMetric::CredConf: return "cred+conf";
        case QualityMetric::RawProbability: return "raw-probability";
    }
    return "?";
}

namespace {

MetricValue ratio(std::size_t num, std::size_t den) {
    if (den == 0) return {0.0, true};
    return {static_cast<double>(num) / static_cast<double>(den), false};
}

}  // namespace

MetricValue Confusion::f1() const { return ratio(2 * tp, 2 * tp + fp + fn); }
MetricValue Confusion::precision() const { return ratio(tp, tp + fp); }
MetricValue Confusion::recall() const { return ratio(tp, tp + fn); }

Confusion& Confusion::operator+=(const Confusion& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
}

void add_to_confusion(Confusion& c, Label predicted, Label truth, Label positive) {
    const bool pred_pos = predicted == positive;
    const bool true_pos = truth == positive;
    if (pred_pos && true_pos) ++c.tp;
    else if (pred_pos) ++c.fp;
    else if (true_pos) ++c.fn;
    else ++c.tn;
}

void SearchSpec::validate() const {
    if (max_iterations < 1) throw ConfigError("search.max_iterations must be at least 1");
    if ((constraint == Metric::F1Kept || constraint == Metric::PrecisionKept || constraint == Metric::RecallKept ||
         constraint == Metric::KeptRate) &&
        bound < 0.0) {
        throw ConfigError("search.bound must be non-negative for a rate constraint");
    }
    if (!(grid_cap > 0.0)) throw ConfigError("search.grid_cap must be positive");
}

SearchSpec search_preset(std::string_view name) {
    SearchSpec s;
    if (name == "default") return s;
    if (name == "min-rejection") {
        s.objective = Metric::NegRejectionRate;
        s.constraint = Metric::F1Kept;
        s.bound = 0.8;
        return s;
    }
    throw ConfigError("search.preset: unknown preset '" + std::string(name) + "' (expected default or min-rejection)");
}

SearchSpec search_spec_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("search: expected an object");
    try {
        SearchSpec s = search_preset(j.value("preset", std::string("default")));
        if (j.contains("objective")) s.objective = metric_from_name(j.at("objective").get<std::string>());
        if (j.contains("constraint")) s.constraint = metric_from_name(j.at("constraint").get<std::string>());
        if (j.contains("bound")) s.bound = j.at("bound").get<double>();
        if (j.contains("max_iterations")) s.max_iterations = j.at("max_iterations").get<std::size_t>();
        if (j.contains("no_update_stop")) s.no_update_stop = j.at("no_update_stop").get<std::size_t>();
        if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("quality")) s.quality = quality_from_name(j.at("quality").get<std::string>());
        if (j.value("use_confidence", false)) {
            if (s.quality == QualityMetric::RawProbability) {
                throw ConfigError("search.use_confidence cannot be combined with raw-probability");
            }
            s.quality = QualityMetric::CredConf;
        }
        if (j.contains("threads")) s.threads = j.at("threads").get<std::size_t>();
        if (j.contains("positive") && !j.at("positive").is_null()) s.positive = j.at("positive").get<std::string>();
        if (j.contains("grid_cap")) s.grid_cap = j.at("grid_cap").get<double>();
        s.validate();
        return s;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("search: ") + e.what());
    }
}

json search_spec_to_json(const SearchSpec& s) {
    json j = {{"objective", metric_name(s.objective)},
              {"constraint", metric_name(s.constraint)},
              {"bound", s.bound},
              {"max_iterations", s.max_iterations},
              {"no_update_stop", s.no_update_stop},
              {"seed", s.seed},
              {"quality", quality_name(s.quality)},
              {"use_confidence", s.use_confidence()},
              {"grid_cap", s.grid_cap}};
    j["positive"] = s.positive ? json(*s.positive) : json(nullptr);
    return j;
}

Label positive_label(const SearchSpec& s, const LabelSpace& labels) {
    if (labels.empty()) throw DomainError("empty label space");
    if (!s.positive) return labels.size() - 1;
    auto l = labels.find(*s.positive);
    if (!l) throw ConfigError("search.positive: class '" + *s.positive + "' is not in the label space");
    return *l;
}

namespace {

// Compact view of a record for the search inner loop.
struct Row {
    Label predicted;
    Label truth;
    double quality;
    double confidence;
};

std::vector<Row> compact(std::span<const PValueRecord> records) {
    std::vector<Row> rows;
    rows.reserve(records.size());
    for (const auto& r : records) {
        if (!r.truth) throw DomainError("threshold evaluation needs ground truth (record '" + r.id + "')");
        rows.push_back({r.predicted, *r.truth, r.credibility, r.confidence});
    }
    return rows;
}

struct Tally {
    Confusion kept;
    std::size_t rejected = 0;
    std::size_t total = 0;
};

// t: cred thresholds, optionally followed by conf thresholds.
Tally tally(std::span<const Row> rows, std::span<const double> t, std::size_t num_classes, Label positive) {
    const bool with_conf = t.size() == 2 * num_classes;
    Tally out;
    out.total = rows.size();
    for (const auto& r : rows) {
        bool kept = r.quality >= t[r.predicted];
        if (kept && with_conf) kept = r.confidence >= t[num_classes + r.predicted];
        if (kept) {
            add_to_confusion(out.kept, r.predicted, r.truth, positive);
        } else {
            ++out.rejected;
        }
    }
    return out;
}

MetricValue metric_of(const Tally& t, Metric m) {
    switch (m) {
        case Metric::F1Kept: return t.kept.f1();
        case Metric::PrecisionKept: return t.kept.precision();
        case Metric::RecallKept: return t.kept.recall();
        case Metric::KeptRate: return ratio(t.kept.total(), t.total);
        case Metric::NegRejectionRate: {
            auto r = ratio(t.rejected, t.total);
            return {-r.value, r.degenerate};
        }
    }
    return {};
}

struct Candidate {
    std::vector<double> t;
    MetricValue f;
    MetricValue g;
};

class SearchState {
public:
    SearchState(const SearchSpec& spec, Candidate initial) : spec_(spec), best_(std::move(initial)) {
        best_feasible_ = feasible(best_);
    }

    // Returns true when the candidate replaced the incumbent.
    bool offer(Candidate c, std::size_t trial) {
        const bool ok = feasible(c);
        any_feasible_ = any_feasible_ || ok;
        const double f = c.f.value, g = c.g.value;
        const double bf = best_.f.value, bg = best_.g.value;
        const bool accept = (!best_feasible_ && ok) || (f > bf && ok) || (f == bf && g > bg);
        if (!accept) return false;
        best_ = std::move(c);
        best_feasible_ = ok;
        updates_.push_back({trial, f, g});
        return true;
    }

    SearchResult finish(std::size_t num_classes, std::size_t trials, std::string reason) const {
        SearchResult r;
        r.thresholds = ThresholdSet::from_vector(best_.t, num_classes);
        r.objective = best_.f;
        r.constraint = best_.g;
        r.trials = trials;
        r.stop_reason = std::move(reason);
        r.constraint_satisfied = best_feasible_;
        r.any_feasible_sampled = any_feasible_;
        r.updates = updates_;
        return r;
    }

private:
    bool feasible(const Candidate& c) const { return c.g.value >= spec_.bound; }

    const SearchSpec& spec_;
    Candidate best_;
    bool best_feasible_ = false;
    bool any_feasible_ = false;
    std::vector<SearchUpdate> updates_;
};

constexpr std::size_t kBatch = 1024;

// Evaluates candidates produced by `next` in batches (possibly on several
// threads) and merges them strictly in trial order.
template <typename Next>
SearchResult run_search(std::span<const PValueRecord> records, std::size_t num_classes, const SearchSpec& spec,
                        Label positive, std::size_t total, bool early_stop, const char* exhausted_reason,
                        Next&& next) {
    spec.validate();
    if (num_classes == 0) throw DomainError("threshold search over an empty label space");
    if (positive >= num_classes) throw DomainError("positive class outside the label space");
    const auto rows = compact(records);
    for (const auto& r : rows) {
        if (r.predicted >= num_classes || r.truth >= num_classes) throw DomainError("record class out of range");
    }
    const std::size_t dims = spec.use_confidence() ? 2 * num_classes : num_classes;

    auto evaluate = [&](std::vector<double> t) {
        const auto tl = tally(rows, t, num_classes, positive);
        return Candidate{std::move(t), metric_of(tl, spec.objective), metric_of(tl, spec.constraint)};
    };

    SearchState state(spec, evaluate(std::vector<double>(dims, 0.0)));
    std::size_t trials = 0;
    std::size_t since_update = 0;
    std::vector<Candidate> batch;
    while (trials < total) {
        const std::size_t n = std::min(kBatch, total - trials);
        batch.assign(n, Candidate{});
        for (std::size_t i = 0; i < n; ++i) batch[i].t = next(dims);
        detail::parallel_for(n, spec.threads, [&](std::size_t i) { batch[i] = evaluate(std::move(batch[i].t)); });
        for (std::size_t i = 0; i < n; ++i) {
            ++trials;
            if (state.offer(std::move(batch[i]), trials)) {
                since_update = 0;
            } else if (early_stop && spec.no_update_stop > 0 && ++since_update >= spec.no_update_stop) {
                return state.finish(num_classes, trials, "no-update");
            }
        }
    }
    return state.finish(num_classes, trials, exhausted_reason);
}

}  // namespace

MetricValue evaluate_thresholds(std::span<const PValueRecord> records, const ThresholdSet& t, Metric metric,
                                Label positive) {
    const std::size_t num_classes = t.cred.size();
    const auto rows = compact(records);
    for (const auto& r : rows) {
        if (r.predicted >= num_classes) throw DomainError("record class out of range");
    }
    const auto v = t.to_vector();
    return metric_of(tally(rows, v, num_classes, positive), metric);
}

json search_result_to_json(const SearchResult& r, const SearchSpec& spec, const LabelSpace& labels) {
    json updates = json::array();
    for (const auto& u : r.updates) {
        updates.push_back({{"trial", u.trial}, {"objective", u.objective}, {"constraint", u.constraint}});
    }
    return {{"thresholds", thresholds_to_json(r.thresholds, labels)},
            {"objective", {{"metric", metric_name(spec.objective)},
                           {"value", r.objective.value},
                           {"degenerate", r.objective.degenerate}}},
            {"constraint", {{"metric", metric_name(spec.constraint)},
                            {"bound", spec.bound},
                            {"value", r.constraint.value},
                            {"degenerate", r.constraint.degenerate},
                            {"satisfied", r.constraint_satisfied}}},
            {"trials", r.trials},
            {"stop_reason", r.stop_reason},
            {"any_feasible_sampled", r.any_feasible_sampled},
            {"updates", updates}};
}

SearchResult random_search(std::span<const PValueRecord> records, std::size_t num_classes, const SearchSpec& spec,
                           Label positive) {
    Rng rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    return run_search(records, num_classes, spec, positive, spec.max_iterations, true, "max-iterations",
                      [&](std::size_t dims) {
                          std::vector<double> t(dims);
                          for (auto& x : t) x = unit(rng);
                          return t;
                      });
}

std::vector<double> grid_values(double step) {
    if (!(step > 0.0 && step <= 1.0)) throw ConfigError("grid step must be in (0, 1]");
    std::vector<double> v;
    const auto n = static_cast<std::size_t>(std::floor(1.0 / step + 1e-9));
    for (std::size_t i = 0; i <= n; ++i) v.push_back(std::min(1.0, static_cast<double>(i) * step));
    if (v.back() < 1.0 - 1e-12) v.push_back(1.0);
    return v;
}

double grid_trial_count(double step, std::size_t dims) {
    return std::pow(static_cast<double>(grid_values(step).size()), static_cast<double>(dims));
}

SearchResult grid_search(std::span<const PValueRecord> records, std::size_t num_classes, const SearchSpec& spec,
                         Label positive, double step) {
    const auto values = grid_values(step);
    const std::size_t dims = spec.use_confidence() ? 2 * num_classes : num_classes;
    const double count = grid_trial_count(step, dims);
    if (count > spec.grid_cap) throw SearchRefusedError(count, spec.grid_cap);
    const auto total = static_cast<std::size_t>(count);

    std::vector<std::size_t> odometer(dims, 0);
    bool first = true;
    return run_search(records, num_classes, spec, positive, total, false, "grid-exhausted", [&](std::size_t d) {
        if (!first) {
            for (std::size_t i = d; i-- > 0;) {
                if (++odometer[i] < values.size()) break;
                odometer[i] = 0;
            }
        }
        first = false;
        std::vector<double> t(d);
        for (std::size_t i = 0; i < d; ++i) t[i] = values[odometer[i]];
        return t;
    });
}

// ------------------------------------------------------ probability baseline

RankNormalizer::RankNormalizer(std::span<const PValueRecord> reference, std::size_t num_classes) {
    sorted_.resize(num_classes);
    for (const auto& r : reference) {
        if (r.raw_scores.size() != num_classes) {
            throw DomainError("record '" + r.id + "' has no raw classifier scores");
        }
        for (Label c = 0; c < num_classes; ++c) sorted_[c].push_back(r.raw_scores[c]);
    }
    for (auto& s : sorted_) std::sort(s.begin(), s.end());
}

double RankNormalizer::normalize(Label c, double raw) const {
    const auto& s = sorted_.at(c);
    if (s.empty()) throw DomainError("rank normalization with an empty reference set");
    const auto le = std::upper_bound(s.begin(), s.end(), raw) - s.begin();
    return static_cast<double>(le) / static_cast<double>(s.size());
}

std::vector<double> RankNormalizer::normalize(std::span<const double> raw) const {
    if (raw.size() != sorted_.size()) throw DimensionError("raw score vector does not match the class count");
    std::vector<double> out(raw.size());
    for (Label c = 0; c < raw.size(); ++c) out[c] = normalize(c, raw[c]);
    return out;
}

std::vector<PValueRecord> probability_records(std::span<const PValueRecord> records, const RankNormalizer& norm) {
    std::vector<PValueRecord> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        out.push_back(make_record(r.id, r.predicted, r.truth, norm.normalize(r.raw_scores), r.raw_scores, r.fold));
    }
    return out;
}

SearchResult threshold_on_probabilities(std::span<const PValueRecord> records, std::size_t num_classes,
                                        const SearchSpec& spec, Label positive) {
    const RankNormalizer norm(records, num_classes);
    const auto prob = probability_records(records, norm);
    return random_search(prob, num_classes, spec, positive);
}

}  // namespace confeval
