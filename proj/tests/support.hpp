#pragma once

#include "confeval/classifiers.hpp"
#include "confeval/dataset.hpp"
#include "confeval/drift.hpp"
#include "confeval/evaluator.hpp"
#include "confeval/pvalue.hpp"
#include "confeval/random.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace testing {

using namespace confeval;

// Two Gaussian classes "benign" / "malware" with unit variance, interleaved
// so that example i has timestamp i.
inline Dataset blobs(std::size_t n, std::vector<double> benign_mean, std::vector<double> malware_mean,
                     std::uint64_t seed, double sd = 1.0, double malware_share = 0.5) {
    Rng rng(seed);
    std::normal_distribution<double> noise(0.0, sd);
    std::bernoulli_distribution is_malware(malware_share);
    std::vector<LabeledRow> rows;
    for (std::size_t i = 0; i < n; ++i) {
        const bool mal = is_malware(rng);
        const auto& mean = mal ? malware_mean : benign_mean;
        std::vector<Feature> f;
        for (std::size_t d = 0; d < mean.size(); ++d) {
            f.push_back({static_cast<std::uint32_t>(d), mean[d] + noise(rng)});
        }
        rows.push_back({"z" + std::to_string(i), std::move(f), mal ? "malware" : "benign",
                        static_cast<std::int64_t>(i)});
    }
    return make_dataset(std::move(rows), benign_mean.size(), LabelSpace({"benign", "malware"}));
}

inline Dataset points(const std::vector<std::pair<std::vector<double>, std::string>>& xs,
                      std::vector<std::string> labels = {"benign", "malware"}) {
    std::vector<LabeledRow> rows;
    std::size_t dim = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        std::vector<Feature> f;
        for (std::size_t d = 0; d < xs[i].first.size(); ++d) f.push_back({static_cast<std::uint32_t>(d), xs[i].first[d]});
        dim = std::max(dim, xs[i].first.size());
        rows.push_back({"z" + std::to_string(i), std::move(f), xs[i].second, static_cast<std::int64_t>(i)});
    }
    return make_dataset(std::move(rows), dim, LabelSpace(std::move(labels)));
}

inline Example point(std::vector<double> x, std::string id = "q") {
    Example e;
    e.id = std::move(id);
    std::vector<Feature> f;
    for (std::size_t d = 0; d < x.size(); ++d) f.push_back({static_cast<std::uint32_t>(d), x[d]});
    e.features = make_sparse(std::move(f));
    return e;
}

inline ModelFactory centroid_factory() {
    return [](const Dataset& d) -> ModelPtr { return fit_nearest_centroid(d); };
}

inline ModelFactory svm_factory(std::uint64_t seed = 1, double lambda = 1e-3, std::size_t epochs = 10) {
    return [=](const Dataset& d) -> ModelPtr { return fit_linear_svm(d, {lambda, epochs, seed}); };
}

inline CalibrationOptions no_search(std::uint64_t seed = 0) {
    CalibrationOptions o;
    o.seed = seed;
    o.search_thresholds = false;
    return o;
}

// Literal leave-one-out conformal evaluation with a nearest-centroid
// classifier and the centroid NCM: for every i the bag is train minus z_i,
// and the pool for class c holds A(bag minus z_j, z_j) for each z_j of class
// c in the bag. Written with plain loops, independent of the library.
struct OracleRecord {
    Label predicted;
    std::vector<double> pvals;
};

inline std::vector<double> oracle_dense(const Example& e, std::size_t dim) {
    std::vector<double> x(dim, 0.0);
    for (const auto& f : e.features) x[f.index] = f.value;
    return x;
}

inline std::vector<double> oracle_mean(const std::vector<std::vector<double>>& xs, std::size_t dim) {
    std::vector<double> m(dim, 0.0);
    for (const auto& x : xs) {
        for (std::size_t d = 0; d < dim; ++d) m[d] += x[d];
    }
    for (auto& v : m) v /= static_cast<double>(xs.size());
    return m;
}

inline double oracle_distance(const std::vector<double>& x, const std::vector<double>& c) {
    double s = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) s += (x[d] - c[d]) * (x[d] - c[d]);
    return std::sqrt(s);
}

inline std::vector<OracleRecord> leave_one_out_oracle(const Dataset& train) {
    const std::size_t n = train.size(), dim = train.dimensionality(), nc = train.labels().size();
    std::vector<std::vector<double>> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = oracle_dense(train[i], dim);
    auto class_mean_without = [&](Label c, std::size_t skip1, std::size_t skip2) {
        std::vector<std::vector<double>> members;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != skip1 && j != skip2 && *train[j].label == c) members.push_back(x[j]);
        }
        return oracle_mean(members, dim);
    };
    std::vector<OracleRecord> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> dist(nc);
        for (Label c = 0; c < nc; ++c) dist[c] = oracle_distance(x[i], class_mean_without(c, i, i));
        Label pred = 0;
        for (Label c = 1; c < nc; ++c) {
            if (dist[c] < dist[pred]) pred = c;
        }
        out[i].predicted = pred;
        for (Label c = 0; c < nc; ++c) {
            std::size_t ge = 0, total = 0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i || *train[j].label != c) continue;
                const double a = oracle_distance(x[j], class_mean_without(c, i, j));
                ++total;
                ge += a >= dist[c] ? 1 : 0;
            }
            out[i].pvals.push_back(static_cast<double>(ge) / static_cast<double>(total));
        }
    }
    return out;
}

// Two-class threshold-search fixture with positive class 1. Predicted
// positive: nine true positives (credibility 0.5 to 0.9), one false
// positive at 0.95 and two at 0.05 and 0.1. Predicted negative: six true
// negatives (0.2 to 0.9) and one false negative at 0.97.
inline std::vector<PValueRecord> search_fixture() {
    std::vector<PValueRecord> rs;
    auto add = [&](Label pred, Label truth, double cred) {
        std::vector<double> p(2, 0.0);
        p[pred] = cred;
        rs.push_back(make_record("r" + std::to_string(rs.size()), pred, truth, p));
    };
    for (int i = 0; i < 9; ++i) add(1, 1, 0.5 + 0.05 * i);
    add(1, 0, 0.95);
    add(1, 0, 0.05);
    add(1, 0, 0.1);
    for (int i = 0; i < 6; ++i) add(0, 0, 0.2 + 0.14 * i);
    add(0, 1, 0.97);
    return rs;
}

struct GridOptimum {
    double f1 = -1.0;
    double tau0 = 0.0, tau1 = 0.0;
};

// Exhaustive scan of {0, step, ..., 1}^2 for the best F1 on the kept
// records subject to kept-rate >= bound; first optimum in lexicographic
// order wins. Plain loops, no library metric code.
inline GridOptimum brute_force_f1(const std::vector<PValueRecord>& rs, double bound, int steps = 100) {
    GridOptimum best;
    for (int i = 0; i <= steps; ++i) {
        for (int j = 0; j <= steps; ++j) {
            const double t[2] = {i * (1.0 / steps), j * (1.0 / steps)};
            int tp = 0, fp = 0, fn = 0, kept = 0;
            for (const auto& r : rs) {
                if (r.credibility < t[r.predicted]) continue;
                ++kept;
                if (r.predicted == 1 && *r.truth == 1) ++tp;
                if (r.predicted == 1 && *r.truth == 0) ++fp;
                if (r.predicted == 0 && *r.truth == 1) ++fn;
            }
            if (static_cast<double>(kept) / static_cast<double>(rs.size()) < bound) continue;
            const int den = 2 * tp + fp + fn;
            const double f1 = den == 0 ? 0.0 : 2.0 * tp / den;
            if (f1 > best.f1) best = {f1, t[0], t[1]};
        }
    }
    return best;
}

// Drift scenario shared by the metric, CLI and acceptance tests: stationary
// benign N((0,0), I); malware is half a stationary family at (3,0) and half
// a family starting there that moves by (-0.3, 0.5) per period.
inline DriftConfig drift_scenario(std::size_t periods = 18, std::size_t per_period = 400, bool drifting = true) {
    DriftConfig cfg;
    cfg.dimensionality = 2;
    const std::vector<double> shift = drifting ? std::vector<double>{-0.3, 0.5} : std::vector<double>{0.0, 0.0};
    cfg.classes = {ClassDrift{"benign", {{{0, 0}, {1, 1}, 1.0, {}}}, {0, 0}, {}},
                   ClassDrift{"malware", {{{3, 0}, {1, 1}, 0.5, {}}, {{3, 0}, {1, 1}, 0.5, shift}}, {0, 0}, {}}};
    cfg.priors = {{0.5, 0.5}};
    cfg.examples_per_period = per_period;
    cfg.periods = periods;
    return cfg;
}

// First `train_periods` periods for training, one test period per later one.
inline TemporalSplit scenario_split(const DriftConfig& cfg, std::uint64_t seed, std::size_t train_periods = 6) {
    const auto d = generate_drift_stream(cfg, seed);
    return temporal_split(d, cfg.start_timestamp + cfg.period_seconds * static_cast<std::int64_t>(train_periods) - 1,
                          cfg.period_seconds);
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("confeval-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testing
