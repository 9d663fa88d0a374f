#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "confeval/error.hpp"
#include "confeval/metrics.hpp"
#include "confeval/ncm.hpp"
#include "support.hpp"

#include <cmath>

using namespace confeval;

namespace {

Decision dec(std::string id, Label pred, bool kept) { return {std::move(id), pred, 0.5, 0.5, kept, std::nullopt}; }

std::unordered_map<std::string, Label> truth_of(const std::vector<std::pair<std::string, Label>>& xs) {
    return {xs.begin(), xs.end()};
}

CalibrationOptions scenario_options() {
    CalibrationOptions o;
    o.seed = 1;
    o.search = search_preset("default");
    o.search.seed = 2;
    return o;
}

ModelFactory svm() { return testing::svm_factory(3); }

}  // namespace

TEST_CASE("aut hand cases") {
    CHECK(aut(std::vector<double>{1.0, 0.5}) == 0.75);
    CHECK(aut(std::vector<double>{1.0, 0.5, 0.0}) == 0.5);
    CHECK(aut(std::vector<double>(7, 1.0)) == 1.0);
    CHECK_THROWS_AS(aut(std::vector<double>{0.4}), DomainError);
    CHECK_THROWS_AS(aut(std::vector<double>{}), DomainError);
}

TEST_CASE("spearman rank correlation") {
    const std::vector<double> x = {1, 2, 3, 4, 5};
    CHECK(spearman_rho(x, std::vector<double>{2, 4, 6, 8, 10}) == doctest::Approx(1.0));
    CHECK(spearman_rho(x, std::vector<double>{5, 4, 3, 2, 1}) == doctest::Approx(-1.0));
    CHECK(spearman_rho(x, std::vector<double>{1, 1, 1, 1, 1}) == 0.0);
    // ranks of y with a tie: 1, 2.5, 2.5, 4, 5; deviation products sum to 9.5
    const double rho = spearman_rho(x, std::vector<double>{1, 3, 3, 4, 9});
    CHECK(rho == doctest::Approx(9.5 / std::sqrt(10.0 * 9.5)));
}

TEST_CASE("all kept: kept confusion equals baseline") {
    const std::vector<Decision> ds = {dec("a", 1, true), dec("b", 0, true), dec("c", 1, true), dec("d", 0, true)};
    const auto t = truth_of({{"a", 1}, {"b", 1}, {"c", 0}, {"d", 0}});
    const auto r = period_metrics(ds, t, 2, 1);
    CHECK(r.kept == r.baseline);
    CHECK(r.rejected == Confusion{});
    CHECK(r.baseline == Confusion{1, 1, 1, 1});
    CHECK(r.rejection_rate == 0.0);
}

TEST_CASE("adversarial fixture: every kept decision right, every rejected wrong") {
    const std::vector<Decision> ds = {dec("a", 1, true),  dec("b", 0, true),  dec("c", 1, true),
                                      dec("d", 1, false), dec("e", 0, false), dec("f", 1, false)};
    const auto t = truth_of({{"a", 1}, {"b", 0}, {"c", 1}, {"d", 0}, {"e", 1}, {"f", 0}});
    const auto r = period_metrics(ds, t, 2, 1);
    CHECK(r.kept.f1().value == 1.0);
    CHECK(r.rejected.f1().value == 0.0);
    CHECK(r.rejection_rate == 0.5);
    CHECK(r.drift_rates == std::vector<double>{2.0 / 3.0, 1.0 / 3.0});
}

TEST_CASE("no positives kept gives degenerate zero precision and recall") {
    const std::vector<Decision> ds = {dec("a", 0, true), dec("b", 1, false)};
    const auto t = truth_of({{"a", 0}, {"b", 1}});
    const auto r = period_metrics(ds, t, 2, 1);
    CHECK(r.kept.precision().value == 0.0);
    CHECK(r.kept.precision().degenerate);
    CHECK(r.kept.recall().degenerate);
    CHECK(r.kept.f1().degenerate);
    CHECK_FALSE(r.rejected.f1().degenerate);
    CHECK_THROWS_AS(period_metrics(ds, truth_of({{"a", 0}}), 2, 1), IntegrityError);
}

TEST_CASE("partition conservation and drift-rate bookkeeping on the drift stream") {
    const auto split = testing::scenario_split(testing::drift_scenario(10, 200), 4);
    const auto ev = calibrate_ice(split.train, make_ncm("centroid"), svm(), 0.3, scenario_options());
    const auto rep = evaluate_stream(ev, split, 1);
    REQUIRE(rep.periods.size() == 4);
    for (const auto& p : rep.periods) {
        Confusion sum = p.kept;
        sum += p.rejected;
        CHECK(sum == p.baseline);
        double rejected = 0.0;
        for (std::size_t c = 0; c < 2; ++c) rejected += p.drift_rates[c] * static_cast<double>(p.class_counts[c]);
        CHECK(rejected == doctest::Approx(static_cast<double>(p.rejected_count())));
        CHECK(p.rejection_rate == static_cast<double>(p.rejected_count()) / static_cast<double>(p.total()));
    }
}

TEST_CASE("stationary stream rejects at the calibration rate") {
    const auto split = testing::scenario_split(testing::drift_scenario(12, 400, false), 5);
    const auto ev = calibrate_ice(split.train, make_ncm("centroid"), svm(), 0.3, scenario_options());
    REQUIRE(ev.search().has_value());
    const double expected = 1.0 - ev.search()->constraint.value;
    const auto rep = evaluate_stream(ev, split, 1);
    for (double r : rep.rejection_rates()) CHECK(std::abs(r - expected) <= 0.07);
}

TEST_CASE("drifting stream orders kept, baseline and rejected") {
    const auto split = testing::scenario_split(testing::drift_scenario(), 6);
    const auto ev = calibrate_ice(split.train, make_ncm("centroid"), svm(), 0.3, scenario_options());
    const auto rep = evaluate_stream(ev, split, 1, 4);
    CHECK(rep.aut.at("f1/kept") >= rep.aut.at("f1/baseline"));
    CHECK(rep.aut.at("f1/baseline") >= rep.aut.at("f1/rejected"));
    CHECK(rep.aut.at("f1/baseline") == doctest::Approx(aut(rep.series("f1", Partition::Baseline))));
}

TEST_CASE("single test period surfaces the AUT domain error") {
    const auto split = testing::scenario_split(testing::drift_scenario(7, 100), 7);
    REQUIRE(split.test_periods.size() == 1);
    const auto ev = calibrate_ice(split.train, make_ncm("centroid"), svm(), 0.3, scenario_options());
    CHECK_THROWS_AS(evaluate_stream(ev, split, 1), DomainError);
}

TEST_CASE("report CSV and JSON") {
    const auto split = testing::scenario_split(testing::drift_scenario(8, 100), 8);
    const auto ev = calibrate_ice(split.train, make_ncm("centroid"), svm(), 0.3, scenario_options());
    const auto rep = evaluate_stream(ev, split, 1);
    const auto csv = format_report_csv(rep);
    CHECK(csv.rfind("period,start,partition,metric,value,degenerate\n", 0) == 0);
    CHECK(csv.find(",kept,f1,") != std::string::npos);
    CHECK(csv.find(",all,rejection_rate,") != std::string::npos);
    CHECK(csv.find(",all,drift_rate:malware,") != std::string::npos);
    const auto j = report_to_json(rep);
    CHECK(j.at("periods").size() == 2);
    CHECK(j.at("aut").at("f1/kept").get<double>() == rep.aut.at("f1/kept"));
}
