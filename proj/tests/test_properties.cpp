#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "confeval/calibration.hpp"
#include "confeval/evaluator.hpp"
#include "confeval/metrics.hpp"
#include "confeval/ncm.hpp"
#include "confeval/pvalue.hpp"
#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace confeval;

namespace {

double brute_pvalue(const std::vector<double>& pool, double a) {
    std::size_t ge = 0;
    for (double x : pool) ge += x >= a ? 1 : 0;
    return static_cast<double>(ge) / static_cast<double>(pool.size());
}

// Wraps another NCM and passes every score through exp().
class ExpNcm : public Ncm {
public:
    explicit ExpNcm(NcmPtr inner) : inner_(std::move(inner)) {}
    std::string name() const override { return "exp-" + inner_->name(); }
    NcmContextPtr bind(ModelPtr model, std::shared_ptr<const Dataset> bag) const override {
        return std::make_shared<Ctx>(inner_->bind(std::move(model), std::move(bag)));
    }
    NcmContextPtr restore(const nlohmann::json& j, ModelPtr model) const override {
        return std::make_shared<Ctx>(inner_->restore(j, std::move(model)));
    }

private:
    struct Ctx : NcmContext {
        explicit Ctx(NcmContextPtr c) : inner(std::move(c)) {}
        double score(Label c, const Example& z) const override { return std::exp(inner->score(c, z)); }
        double score_member(Label c, std::size_t i) const override { return std::exp(inner->score_member(c, i)); }
        nlohmann::json to_json() const override { return inner->to_json(); }
        NcmContextPtr inner;
    };
    NcmPtr inner_;
};

std::vector<PValueRecord> random_records(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::bernoulli_distribution coin(0.5), mostly(0.8);
    std::vector<PValueRecord> rs;
    for (std::size_t i = 0; i < n; ++i) {
        const Label pred = coin(rng) ? 1 : 0;
        const Label truth = mostly(rng) ? pred : 1 - pred;
        rs.push_back(make_record("r" + std::to_string(i), pred, truth, {u(rng), u(rng)}));
    }
    return rs;
}

// One-sided permutation p-value for a negative Spearman correlation.
double permutation_pvalue_negative(const std::vector<double>& x, std::vector<double> y, std::uint64_t seed,
                                   int rounds = 5000) {
    const double observed = spearman_rho(x, y);
    Rng rng(seed);
    int as_extreme = 0;
    for (int i = 0; i < rounds; ++i) {
        std::shuffle(y.begin(), y.end(), rng);
        as_extreme += spearman_rho(x, y) <= observed ? 1 : 0;
    }
    return (as_extreme + 1.0) / (rounds + 1.0);
}

}  // namespace

TEST_CASE("p-value equals the brute-force count") {
    Rng rng(100);
    std::uniform_int_distribution<int> size(1, 40), grain(0, 20);
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> pool(size(rng));
        for (auto& x : pool) x = grain(rng) / 10.0;
        const double a = grain(rng) / 10.0;
        CHECK(pvalue(pool, a) == brute_pvalue(pool, a));
        auto sorted = pool;
        std::sort(sorted.begin(), sorted.end());
        CHECK(pvalue_sorted(sorted, a) == brute_pvalue(pool, a));
    }
}

TEST_CASE("monotone transform of NCM scores leaves p-values unchanged") {
    const auto train = testing::blobs(400, {0, 0}, {2, 1}, 101);
    const auto test = testing::blobs(100, {0, 0}, {2, 1}, 102);
    const auto plain = calibrate_ice(train, make_ncm("centroid"), testing::centroid_factory(), 0.5,
                                     testing::no_search());
    const auto wrapped = calibrate_ice(train, std::make_shared<ExpNcm>(make_ncm("centroid")),
                                       testing::centroid_factory(), 0.5, testing::no_search());
    for (std::size_t i = 0; i < plain.records().size(); ++i) CHECK(plain.records()[i].pvals == wrapped.records()[i].pvals);
    for (const auto& z : test) CHECK(plain.score(z).pvals == wrapped.score(z).pvals);

    const auto tce = calibrate_tce(train, make_ncm("centroid"), testing::centroid_factory(), 5, testing::no_search(3));
    const auto tce_exp = calibrate_tce(train, std::make_shared<ExpNcm>(make_ncm("centroid")),
                                       testing::centroid_factory(), 5, testing::no_search(3));
    for (std::size_t i = 0; i < tce.records().size(); ++i) CHECK(tce.records()[i].pvals == tce_exp.records()[i].pvals);
}

TEST_CASE("binary credibility and confidence are the two p-values") {
    Rng rng(103);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 500; ++t) {
        const std::vector<double> p = {u(rng), u(rng)};
        const Label pred = p[1] > p[0] ? 1 : 0;
        const auto r = make_record("x", pred, std::nullopt, p);
        std::vector<double> got = {r.credibility, 1.0 - r.confidence};
        std::vector<double> want = p;
        std::sort(got.begin(), got.end());
        std::sort(want.begin(), want.end());
        CHECK(got[0] == doctest::Approx(want[0]).epsilon(1e-15));
        CHECK(got[1] == doctest::Approx(want[1]).epsilon(1e-15));
    }
}

TEST_CASE("TCE equals leave-one-out on random small sets") {
    for (std::uint64_t seed = 110; seed < 120; ++seed) {
        const auto train = testing::blobs(16, {0, 0, 0}, {1, 1, 0.5}, seed);
        if (train.class_counts()[0] < 3 || train.class_counts()[1] < 3) continue;
        const auto ev = calibrate_tce(train, make_ncm("centroid"), testing::centroid_factory(), train.size(),
                                      testing::no_search(seed));
        const auto oracle = testing::leave_one_out_oracle(train);
        for (const auto& r : ev.records()) {
            const auto i = static_cast<std::size_t>(std::stoul(r.id.substr(1)));
            CHECK(r.pvals == oracle[i].pvals);
            CHECK(r.predicted == oracle[i].predicted);
        }
    }
}

TEST_CASE("validity under exchangeability") {
    const auto train = testing::blobs(2000, {0, 0}, {4, 0}, 121);
    const auto ev = calibrate_ice(train, make_ncm("centroid"), testing::centroid_factory(), 0.5, testing::no_search(1));
    const auto test = testing::blobs(2000, {0, 0}, {4, 0}, 122);
    std::vector<double> cal, fresh;
    for (const auto& r : ev.records()) cal.push_back(r.credibility);
    for (const auto& z : test) fresh.push_back(ev.score(z).credibility);
    for (double eps : {0.05, 0.1, 0.2}) {
        for (const auto* xs : {&cal, &fresh}) {
            const auto below = std::count_if(xs->begin(), xs->end(), [&](double p) { return p <= eps; });
            CHECK(static_cast<double>(below) / static_cast<double>(xs->size()) <= eps + 0.03);
        }
    }
}

TEST_CASE("drifting class credibility decreases over time") {
    // whole malware class translating away from its training position
    auto cfg = testing::drift_scenario(16, 400, false);
    cfg.classes[1].shift_per_period = {0.0, 0.3};
    const auto split = testing::scenario_split(cfg, 123, 4);
    CalibrationOptions opt = testing::no_search(1);
    const auto ev = calibrate_ice(split.train, make_ncm("centroid"), testing::svm_factory(3), 0.3, opt);
    const Label mal = split.train.labels().index_of("malware");
    std::vector<double> period, mean_cred;
    for (std::size_t p = 0; p < split.test_periods.size(); ++p) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& z : split.test_periods[p]) {
            if (*z.label != mal) continue;
            sum += ev.score(z).credibility;
            ++n;
        }
        period.push_back(static_cast<double>(p));
        mean_cred.push_back(sum / static_cast<double>(n));
    }
    REQUIRE(period.size() >= 10);
    CHECK(spearman_rho(period, mean_cred) < 0.0);
    CHECK(permutation_pvalue_negative(period, mean_cred, 7) < 0.01);
}

TEST_CASE("search returns feasible thresholds whenever a feasible point was sampled") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto rs = random_records(60, 200 + seed);
        SearchSpec spec;
        spec.seed = seed;
        spec.bound = 0.5 + 0.015 * static_cast<double>(seed);
        spec.max_iterations = 500;
        const auto r = random_search(rs, 2, spec, 1);
        const double g = evaluate_thresholds(rs, r.thresholds, spec.constraint, 1).value;
        if (r.any_feasible_sampled) {
            CHECK(g >= spec.bound);
            CHECK(r.constraint_satisfied);
        } else {
            CHECK(r.thresholds == ThresholdSet::zeros(2));
        }
    }
}

TEST_CASE("accepted updates never go backwards") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto rs = random_records(80, 300 + seed);
        SearchSpec spec;
        spec.seed = seed;
        spec.bound = 0.7;
        spec.max_iterations = 2000;
        const auto r = random_search(rs, 2, spec, 1);
        for (std::size_t i = 1; i < r.updates.size(); ++i) {
            const auto& a = r.updates[i - 1];
            const auto& b = r.updates[i];
            CHECK(b.trial > a.trial);
            if (a.constraint >= spec.bound) {
                CHECK((b.objective > a.objective || (b.objective == a.objective && b.constraint > a.constraint)));
            }
        }
    }
}

TEST_CASE("random and grid search agree on two-class fixtures") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto rs = random_records(50, 400 + seed);
        SearchSpec spec;
        spec.seed = seed;
        spec.bound = 0.8;
        spec.max_iterations = 10000;
        spec.no_update_stop = 0;
        spec.threads = 4;
        const auto random = random_search(rs, 2, spec, 1);
        const auto grid = grid_search(rs, 2, spec, 1, 0.01);
        CHECK(std::abs(random.objective.value - grid.objective.value) <= 0.01);
    }
}

TEST_CASE("trial accounting") {
    const auto rs = random_records(40, 500);
    SearchSpec spec;
    spec.max_iterations = 777;
    spec.no_update_stop = 0;
    CHECK(random_search(rs, 2, spec, 1).trials == 777);
    spec.no_update_stop = 50;
    const auto early = random_search(rs, 2, spec, 1);
    CHECK(early.trials <= 777);
    if (early.stop_reason == "no-update") {
        const std::size_t last = early.updates.empty() ? 0 : early.updates.back().trial;
        CHECK(early.trials == last + 50);
    }
    for (double step : {0.5, 0.25, 0.1, 0.05}) {
        const auto g = grid_search(rs, 2, spec, 1, step);
        CHECK(static_cast<double>(g.trials) == grid_trial_count(step, 2));
        CHECK(static_cast<double>(g.trials) == std::pow(static_cast<double>(grid_values(step).size()), 2));
    }
}

TEST_CASE("AUT is linear in the series") {
    Rng rng(600);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> v(2 + t % 10);
        for (auto& x : v) x = u(rng);
        const double c = u(rng);
        std::vector<double> scaled = v;
        for (auto& x : scaled) x *= c;
        CHECK(aut(scaled) == doctest::Approx(c * aut(v)).epsilon(1e-12));
    }
}

TEST_CASE("CCE kept count is non-increasing in the quorum") {
    const auto train = testing::blobs(300, {0, 0}, {1.5, 0.5}, 700);
    CalibrationOptions opt;
    opt.seed = 4;
    opt.search.max_iterations = 1000;
    const auto ev = calibrate_cce(train, make_ncm("centroid"), testing::centroid_factory(), 5, 0, opt);
    const auto test = testing::blobs(300, {0, 0}, {1.5, 0.5}, 701);
    std::size_t previous = test.size() + 1;
    for (std::size_t q = 1; q <= 5; ++q) {
        const auto ds = ev.with_quorum(q).decide_all(test);
        const auto kept = static_cast<std::size_t>(std::count_if(ds.begin(), ds.end(), [](const Decision& d) { return d.kept; }));
        CHECK(kept <= previous);
        previous = kept;
    }
}

TEST_CASE("parallel batch decisions match sequential ones") {
    const auto split = testing::scenario_split(testing::drift_scenario(9, 200), 800);
    CalibrationOptions opt;
    opt.seed = 2;
    opt.threads = 4;
    opt.search.max_iterations = 1000;
    const auto ev = calibrate_cce(split.train, make_ncm("centroid"), testing::centroid_factory(), 4, 0, opt);
    opt.threads = 1;
    const auto seq = calibrate_cce(split.train, make_ncm("centroid"), testing::centroid_factory(), 4, 0, opt);
    CHECK(ev.to_json() == seq.to_json());
    for (const auto& period : split.test_periods) {
        const auto a = ev.decide_all(period, 1), b = ev.decide_all(period, 8);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].id == b[i].id);
            CHECK(a[i].kept == b[i].kept);
            CHECK(a[i].credibility == b[i].credibility);
        }
    }
}
