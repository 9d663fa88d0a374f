#include "confeval/evaluator.hpp"

#include "confeval/error.hpp"
#include "confeval/parallel.hpp"
#include "confeval/random.hpp"

#include <algorithm>
#include <numeric>

namespace confeval {

EvaluatorKind evaluator_kind_from_name(std::string_view name) {
    if (name == "tce") return EvaluatorKind::Tce;
    if (name == "approx-tce") return EvaluatorKind::ApproxTce;
    if (name == "ice") return EvaluatorKind::Ice;
    if (name == "cce") return EvaluatorKind::Cce;
    throw ConfigError("unknown evaluator kind '" + std::string(name) + "' (expected tce, approx-tce, ice or cce)");
}

std::string evaluator_kind_name(EvaluatorKind k) {
    switch (k) {
        case EvaluatorKind::Tce: return "tce";
        case EvaluatorKind::ApproxTce: return "approx-tce";
        case EvaluatorKind::Ice: return "ice";
        case EvaluatorKind::Cce: return "cce";
    }
    return "?";
}

std::vector<std::vector<std::size_t>> partition_folds(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k < 2 || k > n) {
        throw ConfigError("fold count k = " + std::to_string(k) + " must lie in [2, " + std::to_string(n) + "]");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> folds(k);
    std::size_t pos = 0;
    for (std::size_t j = 0; j < k; ++j) {
        const std::size_t size = n / k + (j < n % k ? 1 : 0);
        folds[j].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                        order.begin() + static_cast<std::ptrdiff_t>(pos + size));
        std::sort(folds[j].begin(), folds[j].end());
        pos += size;
    }
    return folds;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> ice_split(const Dataset& train, double fraction,
                                                                        bool temporal, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw ConfigError("calibration_fraction must lie strictly between 0 and 1");
    }
    const std::size_t n = train.size();
    if (n < 2) throw ConfigError("ICE needs at least two training examples");
    const auto wanted = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    const std::size_t n_cal = std::clamp<std::size_t>(wanted, 1, n - 1);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (temporal) {
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return train[a].timestamp < train[b].timestamp; });
    } else {
        Rng rng(seed);
        std::shuffle(order.begin(), order.end(), rng);
    }
    std::vector<std::size_t> proper(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_cal));
    std::vector<std::size_t> calib(order.end() - static_cast<std::ptrdiff_t>(n_cal), order.end());
    std::sort(proper.begin(), proper.end());
    std::sort(calib.begin(), calib.end());
    return {std::move(proper), std::move(calib)};
}

struct EvaluatorBuilder {
    static CalibratedEvaluator make(EvaluatorKind kind, const Dataset& train, const NcmPtr& ncm,
                                    const CalibrationOptions& opt) {
        CalibratedEvaluator ev;
        ev.kind_ = kind;
        ev.labels_ = train.labels();
        ev.dimensionality_ = train.dimensionality();
        ev.ncm_name_ = ncm->name();
        ev.ncm_options_ = ncm->options_json();
        ev.quality_ = opt.search.quality;
        ev.seed_ = opt.seed;
        return ev;
    }
    static std::vector<FoldState>& folds(CalibratedEvaluator& ev) { return ev.folds_; }
    static std::vector<PValueRecord>& records(CalibratedEvaluator& ev) { return ev.records_; }
    static void set_global(CalibratedEvaluator& ev, ThresholdSet t, std::optional<SearchResult> s) {
        ev.thresholds_ = std::move(t);
        ev.search_ = std::move(s);
    }
    static void set_quorum(CalibratedEvaluator& ev, std::size_t q) { ev.quorum_ = q; }
};

namespace {

void require_labeled(const Dataset& train) {
    if (train.labels().empty()) throw CalibrationError("training set has an empty label space");
    if (!train.fully_labeled()) throw CalibrationError("training set contains unlabeled examples");
}

// Pools of leave-self-out scores of every bag member under its own label.
std::vector<std::vector<double>> member_pools(const NcmContext& ctx, const Dataset& bag) {
    std::vector<std::vector<double>> pools(bag.labels().size());
    for (std::size_t i = 0; i < bag.size(); ++i) {
        const Label y = *bag[i].label;
        pools[y].push_back(ctx.score_member(y, i));
    }
    for (auto& p : pools) std::sort(p.begin(), p.end());
    return pools;
}

void require_all_classes(const std::vector<std::size_t>& counts, const LabelSpace& labels, const std::string& where,
                         std::size_t minimum = 1) {
    for (Label c = 0; c < labels.size(); ++c) {
        if (counts[c] < minimum) {
            throw CalibrationError(where + ": class '" + labels.name(c) + "' has " + std::to_string(counts[c]) +
                                   " example(s), needs at least " + std::to_string(minimum));
        }
    }
}

std::vector<std::size_t> counts_of(const Dataset& train, std::span<const std::size_t> idx) {
    std::vector<std::size_t> counts(train.labels().size(), 0);
    for (auto i : idx) ++counts[*train[i].label];
    return counts;
}

struct FoldOutput {
    FoldState state;
    std::vector<PValueRecord> records;
};

// ICE-style fold: fit on `proper`, score `calib` against pools built from
// `calib` itself with the scored point left out.
FoldOutput inductive_fold(const Dataset& train, std::span<const std::size_t> proper_idx,
                          std::span<const std::size_t> calib_idx, const NcmPtr& ncm, const ModelFactory& factory,
                          std::size_t fold, const std::string& where) {
    const auto& labels = train.labels();
    const std::size_t nc = labels.size();
    require_all_classes(counts_of(train, calib_idx), labels, where + " calibration set", 2);

    auto proper = std::make_shared<const Dataset>(train.subset(proper_idx));
    FoldOutput out;
    out.state.model = factory(*proper);
    out.state.context = ncm->bind(out.state.model, proper);
    const auto& ctx = *out.state.context;

    std::vector<std::vector<double>> alphas(calib_idx.size());
    std::vector<std::vector<double>> pools(nc);
    for (std::size_t i = 0; i < calib_idx.size(); ++i) {
        const auto& z = train[calib_idx[i]];
        alphas[i].resize(nc);
        for (Label c = 0; c < nc; ++c) alphas[i][c] = ctx.score(c, z);
        pools[*z.label].push_back(alphas[i][*z.label]);
    }
    for (auto& p : pools) std::sort(p.begin(), p.end());

    out.records.reserve(calib_idx.size());
    for (std::size_t i = 0; i < calib_idx.size(); ++i) {
        const auto& z = train[calib_idx[i]];
        auto raw = out.state.model->scores(z);
        const Label pred = argmax_first(raw);
        std::vector<double> p(nc);
        for (Label c = 0; c < nc; ++c) {
            p[c] = c == *z.label ? pvalue_sorted_without(pools[c], alphas[i][c], alphas[i][c])
                                 : pvalue_sorted(pools[c], alphas[i][c]);
        }
        out.records.push_back(make_record(z.id, pred, z.label, std::move(p), std::move(raw), fold));
    }
    out.state.pools = std::move(pools);
    return out;
}

SearchResult search_thresholds(std::span<const PValueRecord> records, std::size_t nc, const CalibrationOptions& opt,
                               const SearchSpec& spec, Label positive) {
    if (opt.grid_step) return grid_search(records, nc, spec, positive, *opt.grid_step);
    return random_search(records, nc, spec, positive);
}

// Runs the configured search on one set of records; fills the fold's
// normalizer when raw-probability quality is used.
std::pair<ThresholdSet, std::optional<SearchResult>> calibrate_thresholds(
    std::span<const PValueRecord> records, const LabelSpace& labels, const CalibrationOptions& opt,
    const SearchSpec& spec, RankNormalizer& normalizer) {
    const std::size_t nc = labels.size();
    std::vector<PValueRecord> quality_records;
    std::span<const PValueRecord> view = records;
    if (spec.quality == QualityMetric::RawProbability) {
        normalizer = RankNormalizer(records, nc);
        quality_records = probability_records(records, normalizer);
        view = quality_records;
    }
    if (!opt.search_thresholds) return {ThresholdSet::zeros(nc, spec.use_confidence()), std::nullopt};
    auto result = search_thresholds(view, nc, opt, spec, positive_label(spec, labels));
    return {result.thresholds, std::move(result)};
}

}  // namespace

CalibratedEvaluator calibrate_tce(const Dataset& train, const NcmPtr& ncm, const ModelFactory& factory, std::size_t k,
                                  const CalibrationOptions& opt) {
    require_labeled(train);
    opt.search.validate();
    const std::size_t n = train.size();
    const auto folds = partition_folds(n, k, opt.seed);
    const auto& labels = train.labels();
    const std::size_t nc = labels.size();

    // Leave-self-out pools need two members of every class in each remainder.
    for (std::size_t j = 0; j < k; ++j) {
        auto counts = train.class_counts();
        for (auto i : folds[j]) --counts[*train[i].label];
        require_all_classes(counts, labels, "fold " + std::to_string(j) + " training remainder", 2);
    }

    std::vector<std::vector<PValueRecord>> per_fold(k);
    detail::parallel_for(k, opt.threads, [&](std::size_t j) {
        auto remainder = std::make_shared<const Dataset>(train.without(folds[j]));
        auto model = factory(*remainder);
        auto ctx = ncm->bind(model, remainder);
        const auto pools = member_pools(*ctx, *remainder);
        for (auto h : folds[j]) {
            const auto& z = train[h];
            auto raw = model->scores(z);
            const Label pred = argmax_first(raw);
            std::vector<double> p(nc);
            for (Label c = 0; c < nc; ++c) p[c] = pvalue_sorted(pools[c], ctx->score(c, z));
            per_fold[j].push_back(make_record(z.id, pred, z.label, std::move(p), std::move(raw), j));
        }
    });

    auto ev = EvaluatorBuilder::make(k == n ? EvaluatorKind::Tce : EvaluatorKind::ApproxTce, train, ncm, opt);
    auto& records = EvaluatorBuilder::records(ev);
    for (auto& f : per_fold) {
        for (auto& r : f) records.push_back(std::move(r));
    }

    auto full = std::make_shared<const Dataset>(train);
    FoldState state;
    state.model = factory(*full);
    state.context = ncm->bind(state.model, full);
    state.pools = member_pools(*state.context, *full);
    auto [t, search] = calibrate_thresholds(records, labels, opt, opt.search, state.normalizer);
    EvaluatorBuilder::folds(ev).push_back(std::move(state));
    EvaluatorBuilder::set_global(ev, std::move(t), std::move(search));
    return ev;
}

CalibratedEvaluator calibrate_ice(const Dataset& train, const NcmPtr& ncm, const ModelFactory& factory,
                                  double calibration_fraction, const CalibrationOptions& opt) {
    require_labeled(train);
    opt.search.validate();
    const auto [proper, calib] = ice_split(train, calibration_fraction, opt.temporal_split, opt.seed);
    auto out = inductive_fold(train, proper, calib, ncm, factory, 0, "ICE");

    auto ev = EvaluatorBuilder::make(EvaluatorKind::Ice, train, ncm, opt);
    EvaluatorBuilder::records(ev) = std::move(out.records);
    auto [t, search] =
        calibrate_thresholds(EvaluatorBuilder::records(ev), train.labels(), opt, opt.search, out.state.normalizer);
    EvaluatorBuilder::folds(ev).push_back(std::move(out.state));
    EvaluatorBuilder::set_global(ev, std::move(t), std::move(search));
    return ev;
}

CalibratedEvaluator calibrate_cce(const Dataset& train, const NcmPtr& ncm, const ModelFactory& factory, std::size_t k,
                                  std::size_t quorum, const CalibrationOptions& opt) {
    require_labeled(train);
    opt.search.validate();
    if (quorum == 0) quorum = k / 2 + 1;
    if (quorum > k) throw ConfigError("quorum must lie in [1, k]");
    const auto folds = partition_folds(train.size(), k, opt.seed);

    std::vector<FoldOutput> outs(k);
    detail::parallel_for(k, opt.threads, [&](std::size_t j) {
        std::vector<std::size_t> proper_idx;
        proper_idx.reserve(train.size() - folds[j].size());
        for (std::size_t i = 0, f = 0; i < train.size(); ++i) {
            if (f < folds[j].size() && folds[j][f] == i) {
                ++f;
                continue;
            }
            proper_idx.push_back(i);
        }
        outs[j] = inductive_fold(train, proper_idx, folds[j], ncm, factory, j, "fold " + std::to_string(j));
        SearchSpec spec = opt.search;
        spec.seed = derive_seed(opt.search.seed, j);
        spec.threads = 1;
        auto [t, search] = calibrate_thresholds(outs[j].records, train.labels(), opt, spec, outs[j].state.normalizer);
        outs[j].state.thresholds = std::move(t);
        outs[j].state.search = std::move(search);
    });

    auto ev = EvaluatorBuilder::make(EvaluatorKind::Cce, train, ncm, opt);
    for (auto& o : outs) {
        for (auto& r : o.records) EvaluatorBuilder::records(ev).push_back(std::move(r));
        EvaluatorBuilder::folds(ev).push_back(std::move(o.state));
    }
    EvaluatorBuilder::set_quorum(ev, quorum);
    return ev;
}

// --------------------------------------------------------------- test time

void CalibratedEvaluator::check_input(const Example& z) const {
    if (!calibrated()) throw StateError("evaluator is not calibrated");
    if (!z.features.empty() && z.features.back().index >= dimensionality_) {
        throw DimensionError("example '" + z.id + "' has feature index " + std::to_string(z.features.back().index) +
                             " but the evaluator was calibrated with dimensionality " +
                             std::to_string(dimensionality_));
    }
}

std::vector<double> CalibratedEvaluator::fold_quality(const FoldState& f, const Example& z, Label& predicted,
                                                      std::vector<double>& raw) const {
    raw = f.model->scores(z);
    predicted = argmax_first(raw);
    if (quality_ == QualityMetric::RawProbability) return f.normalizer.normalize(raw);
    std::vector<double> p(labels_.size());
    for (Label c = 0; c < p.size(); ++c) p[c] = pvalue_sorted(f.pools[c], f.context->score(c, z));
    return p;
}

PValueRecord CalibratedEvaluator::score(const Example& z) const {
    check_input(z);
    const std::size_t nc = labels_.size();
    if (kind_ != EvaluatorKind::Cce) {
        Label pred = 0;
        std::vector<double> raw;
        auto q = fold_quality(folds_[0], z, pred, raw);
        return make_record(z.id, pred, z.label, std::move(q), std::move(raw), 0);
    }
    std::vector<double> mean(nc, 0.0), mean_raw(nc, 0.0);
    std::vector<double> votes(nc, 0.0);
    for (const auto& f : folds_) {
        Label pred = 0;
        std::vector<double> raw;
        const auto q = fold_quality(f, z, pred, raw);
        votes[pred] += 1.0;
        for (Label c = 0; c < nc; ++c) {
            mean[c] += q[c];
            mean_raw[c] += raw[c];
        }
    }
    const auto k = static_cast<double>(folds_.size());
    for (Label c = 0; c < nc; ++c) {
        mean[c] /= k;
        mean_raw[c] /= k;
    }
    return make_record(z.id, argmax_first(votes), z.label, std::move(mean), std::move(mean_raw), 0);
}

Decision CalibratedEvaluator::decide(const Example& z) const {
    check_input(z);
    Decision d;
    d.id = z.id;
    if (kind_ != EvaluatorKind::Cce) {
        const auto r = score(z);
        d.predicted = r.predicted;
        d.credibility = r.credibility;
        d.confidence = r.confidence;
        d.kept = keep(r, *thresholds_);
        return d;
    }
    const std::size_t nc = labels_.size();
    std::vector<double> mean(nc, 0.0), votes(nc, 0.0);
    std::size_t s = 0;
    for (const auto& f : folds_) {
        Label pred = 0;
        std::vector<double> raw;
        auto q = fold_quality(f, z, pred, raw);
        votes[pred] += 1.0;
        for (Label c = 0; c < nc; ++c) mean[c] += q[c];
        const auto r = make_record(z.id, pred, std::nullopt, std::move(q));
        s += keep(r, *f.thresholds) ? 1 : 0;
    }
    for (auto& m : mean) m /= static_cast<double>(folds_.size());
    d.predicted = argmax_first(votes);
    d.credibility = credibility_of(mean, d.predicted);
    d.confidence = confidence_of(mean, d.predicted);
    d.s = s;
    d.kept = s >= quorum_;
    return d;
}

std::vector<Decision> CalibratedEvaluator::decide_all(const Dataset& d, std::size_t threads) const {
    if (!calibrated()) throw StateError("evaluator is not calibrated");
    if (d.labels() != labels_) {
        return decide_all(d.relabeled(labels_), threads);
    }
    std::vector<Decision> out(d.size());
    detail::parallel_for(d.size(), threads, [&](std::size_t i) { out[i] = decide(d[i]); });
    return out;
}

CalibratedEvaluator CalibratedEvaluator::with_thresholds(ThresholdSet t) const {
    if (kind_ == EvaluatorKind::Cce) throw StateError("CCE thresholds are per fold");
    t.validate(labels_.size());
    CalibratedEvaluator copy = *this;
    copy.thresholds_ = std::move(t);
    return copy;
}

CalibratedEvaluator CalibratedEvaluator::with_quorum(std::size_t quorum) const {
    if (kind_ != EvaluatorKind::Cce) throw StateError("quorum applies to CCE only");
    if (quorum < 1 || quorum > folds_.size()) throw ConfigError("quorum must lie in [1, k]");
    CalibratedEvaluator copy = *this;
    copy.quorum_ = quorum;
    return copy;
}

std::string format_decisions_csv(std::span<const Decision> decisions, const LabelSpace& labels) {
    std::string out = "id,predicted,credibility,confidence,kept,s\n";
    for (const auto& d : decisions) {
        out += d.id + "," + labels.name(d.predicted) + "," + format_double(d.credibility) + "," +
               format_double(d.confidence) + "," + (d.kept ? "1" : "0") + "," +
               (d.s ? std::to_string(*d.s) : std::string()) + "\n";
    }
    return out;
}

}  // namespace confeval
