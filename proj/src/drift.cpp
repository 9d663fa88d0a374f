#include "confeval/drift.hpp"

#include "confeval/error.hpp"
#include "confeval/random.hpp"

#include <cmath>
#include <algorithm>
#include <random>

namespace confeval {

namespace {

using nlohmann::json;

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + ": field '" + key + "' has the wrong type");
    }
}

template <typename T>
T field_or(const json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    return field<T>(j, key, where);
}

void check_dims(const std::vector<double>& v, std::size_t dims, const std::string& what) {
    if (v.size() != dims) {
        throw ConfigError(what + " has " + std::to_string(v.size()) + " entries, expected " +
                          std::to_string(dims));
    }
}

}  // namespace

void DriftConfig::validate() const {
    if (dimensionality == 0) throw ConfigError("drift: dimensionality must be positive");
    if (classes.empty()) throw ConfigError("drift: no classes configured");
    if (periods == 0) throw ConfigError("drift: periods must be positive");
    if (examples_per_period == 0) throw ConfigError("drift: examples_per_period must be positive");
    if (period_seconds <= 0) throw ConfigError("drift: period_seconds must be positive");
    if (static_cast<std::int64_t>(examples_per_period) > period_seconds) {
        throw ConfigError("drift: more examples per period than seconds per period");
    }
    for (std::size_t i = 0; i < classes.size(); ++i) {
        for (std::size_t k = 0; k < i; ++k) {
            if (classes[k].label == classes[i].label) {
                throw ConfigError("drift: class '" + classes[i].label + "' configured twice");
            }
        }
    }
    for (const auto& c : classes) {
        const std::string where = "drift class '" + c.label + "'";
        if (c.label.empty()) throw ConfigError("drift: class without a label");
        if (c.components.empty()) throw ConfigError(where + ": no mixture components");
        double total_weight = 0.0;
        for (const auto& comp : c.components) {
            check_dims(comp.mean, dimensionality, where + " mean");
            check_dims(comp.variance, dimensionality, where + " variance");
            for (double v : comp.variance) {
                if (!(v > 0.0) || !std::isfinite(v)) {
                    throw ConfigError(where + ": variance must be positive (got " + format_double(v) + ")");
                }
            }
            if (!(comp.weight > 0.0)) throw ConfigError(where + ": component weight must be positive");
            if (!comp.shift_per_period.empty()) check_dims(comp.shift_per_period, dimensionality, where + " component shift");
            total_weight += comp.weight;
        }
        if (!(total_weight > 0.0)) throw ConfigError(where + ": zero total weight");
        if (!c.shift_per_period.empty()) check_dims(c.shift_per_period, dimensionality, where + " shift");
        if (!c.period_offsets.empty()) {
            if (c.period_offsets.size() != periods) {
                throw ConfigError(where + ": period_offsets needs one vector per period");
            }
            for (const auto& o : c.period_offsets) check_dims(o, dimensionality, where + " period offset");
        }
    }
    if (priors.size() != 1 && priors.size() != periods) {
        throw ConfigError("drift: priors needs one row or one row per period");
    }
    for (const auto& row : priors) {
        if (row.size() != classes.size()) throw ConfigError("drift: prior row length differs from class count");
        double s = 0.0;
        for (double p : row) {
            if (p < 0.0 || !std::isfinite(p)) throw ConfigError("drift: negative prior");
            s += p;
        }
        if (!(s > 0.0)) throw ConfigError("drift: priors sum to zero");
    }
}

DriftConfig drift_config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("drift: configuration must be a JSON object");
    DriftConfig cfg;
    cfg.dimensionality = field<std::size_t>(j, "dimensionality", "drift");
    cfg.examples_per_period = field<std::size_t>(j, "examples_per_period", "drift");
    cfg.periods = field<std::size_t>(j, "periods", "drift");
    cfg.start_timestamp = field_or<std::int64_t>(j, "start_timestamp", 0, "drift");
    cfg.period_seconds = field_or<std::int64_t>(j, "period_seconds", 2592000, "drift");
    if (!j.contains("classes") || !j["classes"].is_array()) throw ConfigError("drift: 'classes' must be an array");
    for (const auto& cj : j["classes"]) {
        ClassDrift c;
        c.label = field<std::string>(cj, "label", "drift class");
        const std::string where = "drift class '" + c.label + "'";
        c.shift_per_period = field_or<std::vector<double>>(cj, "shift_per_period", {}, where);
        c.period_offsets = field_or<std::vector<std::vector<double>>>(cj, "period_offsets", {}, where);
        if (!cj.contains("components") || !cj["components"].is_array()) {
            throw ConfigError(where + ": 'components' must be an array");
        }
        for (const auto& mj : cj["components"]) {
            MixtureComponent m;
            m.mean = field<std::vector<double>>(mj, "mean", where);
            m.variance = field<std::vector<double>>(mj, "variance", where);
            m.weight = field_or<double>(mj, "weight", 1.0, where);
            m.shift_per_period = field_or<std::vector<double>>(mj, "shift_per_period", {}, where);
            c.components.push_back(std::move(m));
        }
        cfg.classes.push_back(std::move(c));
    }
    if (!j.contains("priors")) {
        cfg.priors = {std::vector<double>(cfg.classes.size(), 1.0)};
    } else if (j["priors"].is_array() && !j["priors"].empty() && j["priors"][0].is_number()) {
        cfg.priors = {field<std::vector<double>>(j, "priors", "drift")};
    } else {
        cfg.priors = field<std::vector<std::vector<double>>>(j, "priors", "drift");
    }
    cfg.validate();
    return cfg;
}

json to_json(const DriftConfig& cfg) {
    json classes = json::array();
    for (const auto& c : cfg.classes) {
        json comps = json::array();
        for (const auto& m : c.components) {
            json mj = {{"mean", m.mean}, {"variance", m.variance}, {"weight", m.weight}};
            if (!m.shift_per_period.empty()) mj["shift_per_period"] = m.shift_per_period;
            comps.push_back(std::move(mj));
        }
        json cj = {{"label", c.label}, {"components", std::move(comps)}};
        if (!c.shift_per_period.empty()) cj["shift_per_period"] = c.shift_per_period;
        if (!c.period_offsets.empty()) cj["period_offsets"] = c.period_offsets;
        classes.push_back(std::move(cj));
    }
    return {{"dimensionality", cfg.dimensionality},
            {"examples_per_period", cfg.examples_per_period},
            {"periods", cfg.periods},
            {"start_timestamp", cfg.start_timestamp},
            {"period_seconds", cfg.period_seconds},
            {"classes", std::move(classes)},
            {"priors", cfg.priors}};
}

std::vector<double> component_mean(const DriftConfig& cfg, std::size_t cls, std::size_t component,
                                   std::size_t period) {
    const auto& c = cfg.classes.at(cls);
    const auto& m = c.components.at(component);
    std::vector<double> mean = m.mean;
    const double p = static_cast<double>(period);
    for (std::size_t d = 0; d < mean.size(); ++d) {
        if (!c.shift_per_period.empty()) mean[d] += p * c.shift_per_period[d];
        if (!m.shift_per_period.empty()) mean[d] += p * m.shift_per_period[d];
        if (!c.period_offsets.empty()) mean[d] += c.period_offsets[period][d];
    }
    return mean;
}

Dataset generate_drift_stream(const DriftConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<std::string> names;
    for (const auto& c : cfg.classes) names.push_back(c.label);
    std::vector<std::string> sorted = names;
    std::sort(sorted.begin(), sorted.end());
    LabelSpace labels(sorted);

    std::vector<std::discrete_distribution<std::size_t>> component_pick;
    for (const auto& c : cfg.classes) {
        std::vector<double> w;
        for (const auto& m : c.components) w.push_back(m.weight);
        component_pick.emplace_back(w.begin(), w.end());
    }

    const std::int64_t spacing = cfg.period_seconds / static_cast<std::int64_t>(cfg.examples_per_period);
    std::vector<Example> examples;
    examples.reserve(cfg.periods * cfg.examples_per_period);
    for (std::size_t p = 0; p < cfg.periods; ++p) {
        const auto& prior = cfg.priors.size() == 1 ? cfg.priors[0] : cfg.priors[p];
        std::discrete_distribution<std::size_t> class_pick(prior.begin(), prior.end());
        for (std::size_t i = 0; i < cfg.examples_per_period; ++i) {
            const std::size_t cls = class_pick(rng);
            const std::size_t comp = component_pick[cls](rng);
            const auto mean = component_mean(cfg, cls, comp, p);
            const auto& var = cfg.classes[cls].components[comp].variance;
            std::vector<Feature> feats;
            feats.reserve(cfg.dimensionality);
            for (std::size_t d = 0; d < cfg.dimensionality; ++d) {
                const double v = mean[d] + std::sqrt(var[d]) * normal(rng);
                feats.push_back({static_cast<std::uint32_t>(d), v});
            }
            Example e;
            e.id = "p" + std::to_string(p) + "-" + std::to_string(i);
            e.features = make_sparse(std::move(feats));
            e.label = labels.index_of(names[cls]);
            e.timestamp = cfg.start_timestamp + static_cast<std::int64_t>(p) * cfg.period_seconds +
                          static_cast<std::int64_t>(i) * spacing;
            examples.push_back(std::move(e));
        }
    }
    return Dataset(labels, cfg.dimensionality, std::move(examples));
}

}  // namespace confeval
