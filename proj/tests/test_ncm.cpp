#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "confeval/error.hpp"
#include "confeval/ncm.hpp"
#include "support.hpp"

#include <cmath>

using namespace confeval;
using testing::point;
using testing::points;

TEST_CASE("centroid NCM") {
    const auto origin = points({{{-1, 0}, "a"}, {{1, 0}, "a"}}, {"a"});
    CHECK(ncm_centroid(origin.examples(), point({3, 4})) == 5.0);
    CHECK(ncm_centroid(origin.examples(), point({0, 0})) == 0.0);
    const auto bag = points({{{0, 0}, "a"}, {{2, 2}, "a"}}, {"a"});
    CHECK(ncm_centroid(bag.examples(), point({1, 1})) == 0.0);
    CHECK_THROWS_AS(ncm_centroid(std::span<const Example>{}, point({1, 1})), DomainError);
}

TEST_CASE("signed-score NCM") {
    const auto m = wrap_external_scores(parse_external_scores("id,pos,neg\nz,0.9,0.1\nw,0.4,0.6\n"));
    Example z;
    z.id = "z";
    Example w;
    w.id = "w";
    CHECK(ncm_signed_score(*m, 0, z) == -0.9);
    CHECK(ncm_signed_score(*m, 0, z) < ncm_signed_score(*m, 0, w));
    CHECK_THROWS_AS(ncm_signed_score(*m, 5, z), DomainError);

    // w.x + b = 2 on the positive side; the negative class sees -(-2) = 2
    const LinearModel lin(LabelSpace({"neg", "pos"}), {1.0, 0.0}, 0.0);
    CHECK(ncm_signed_score(lin, 0, point({2, 0})) == 2.0);
    CHECK(ncm_signed_score(lin, 1, point({2, 0})) == -2.0);
}

TEST_CASE("abs-margin NCM") {
    const LinearModel lin(LabelSpace({"neg", "pos"}), {1.0, 0.0}, 0.0);
    CHECK(ncm_abs_margin(lin, 0, point({0, 7})) == 0.0);
    CHECK(ncm_abs_margin(lin, 0, point({2, 0})) == -2.0);
    CHECK(ncm_abs_margin(lin, 1, point({2, 0})) == ncm_abs_margin(lin, 0, point({2, 0})));
    const LinearModel zero(LabelSpace({"neg", "pos"}), {0.0, 0.0}, 1.0);
    CHECK_THROWS_AS(ncm_abs_margin(zero, 0, point({1, 1})), DomainError);
}

TEST_CASE("knn-disagreement NCM") {
    const auto bag = points({{{0, 0}, "pos"}, {{1, 0}, "pos"}, {{2, 0}, "neg"}, {{9, 0}, "neg"}}, {"pos", "neg"});
    const KnnIndex index(bag);
    CHECK(ncm_knn_disagreement(index, 0, point({0.5, 0}), 3) == doctest::Approx(1.0 / 3.0));
    CHECK(ncm_knn_disagreement(index, 0, point({0.5, 0}), 2) == 0.0);
    CHECK(ncm_knn_disagreement(index, 1, point({0.5, 0}), 2) == 1.0);
    CHECK_THROWS_AS(ncm_knn_disagreement(index, 0, point({0, 0}), 5), ConfigError);
}

TEST_CASE("ensemble-disagreement NCM") {
    const std::vector<Label> votes = {0, 0, 1, 1, 1};
    CHECK(ncm_ensemble_disagreement(votes, 0) == doctest::Approx(0.6));
    CHECK(ncm_ensemble_disagreement(std::vector<Label>{1, 1}, 1) == 0.0);
    CHECK(ncm_ensemble_disagreement(std::vector<Label>{1, 1}, 0) == 1.0);
    CHECK_THROWS_AS(ncm_ensemble_disagreement(std::span<const Label>{}, 0), DomainError);
}

TEST_CASE("NCM registry") {
    for (const auto& name : ncm_names()) CHECK(make_ncm(name)->name() == name);
    CHECK_THROWS_AS(make_ncm("cosine"), ConfigError);
}

TEST_CASE("centroid context: member scores leave the member out") {
    auto bag = std::make_shared<const Dataset>(points({{{0, 0}, "a"}, {{2, 0}, "a"}, {{4, 0}, "a"}, {{10, 0}, "b"},
                                                       {{12, 0}, "b"}}, {"a", "b"}));
    const auto ctx = make_ncm("centroid")->bind(fit_nearest_centroid(*bag), bag);
    CHECK(ctx->score(0, point({2, 0})) == 0.0);
    // member 0 against {(2,0),(4,0)} -> centroid (3,0)
    CHECK(ctx->score_member(0, 0) == 3.0);
    // member 0 against class b is an ordinary score
    CHECK(ctx->score_member(1, 0) == 11.0);
    const auto ctx2 = make_ncm("centroid")->restore(ctx->to_json(), nullptr);
    CHECK(ctx2->score(1, point({3, 4})) == ctx->score(1, point({3, 4})));
    CHECK_THROWS_AS(ctx2->score_member(0, 0), StateError);
}

TEST_CASE("knn context: member scores skip the member itself") {
    auto bag = std::make_shared<const Dataset>(points({{{0, 0}, "a"}, {{1, 0}, "b"}, {{5, 0}, "a"}}, {"a", "b"}));
    NcmOptions o;
    o.k = 1;
    const auto ctx = make_ncm("knn-disagreement", o)->bind(nullptr, bag);
    CHECK(ctx->score(0, point({0, 0})) == 0.0);
    CHECK(ctx->score_member(0, 0) == 1.0);  // nearest other point is (1,0) labeled b
    const auto back = make_ncm("knn-disagreement", o)->restore(ctx->to_json(), nullptr);
    CHECK(back->score_member(0, 0) == 1.0);
}

TEST_CASE("bounded NCMs stay in [0, 1]") {
    auto bag = std::make_shared<const Dataset>(testing::blobs(60, {0, 0}, {1, 1}, 3));
    NcmOptions o;
    o.k = 7;
    const auto ctx = make_ncm("knn-disagreement", o)->bind(nullptr, bag);
    const auto test = testing::blobs(40, {0, 0}, {1, 1}, 4);
    for (const auto& e : test) {
        for (Label c = 0; c < 2; ++c) {
            const double s = ctx->score(c, e);
            CHECK(s >= 0.0);
            CHECK(s <= 1.0);
            CHECK(s == ctx->score(c, e));
        }
    }
}
