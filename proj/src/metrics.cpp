#include "confeval/metrics.hpp"

#include "confeval/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace confeval {

using nlohmann::json;

std::string partition_name(Partition p) {
    switch (p) {
        case Partition::Baseline: return "baseline";
        case Partition::Kept: return "kept";
        case Partition::Rejected: return "rejected";
    }
    return "?";
}

const Confusion& PeriodReport::partition(Partition p) const {
    switch (p) {
        case Partition::Baseline: return baseline;
        case Partition::Kept: return kept;
        case Partition::Rejected: return rejected;
    }
    return baseline;
}

PeriodReport period_metrics(std::span<const Decision> decisions, const std::unordered_map<std::string, Label>& truth,
                            std::size_t num_classes, Label positive) {
    PeriodReport r;
    r.class_counts.assign(num_classes, 0);
    std::vector<std::size_t> rejected_per_class(num_classes, 0);
    for (const auto& d : decisions) {
        const auto it = truth.find(d.id);
        if (it == truth.end()) throw IntegrityError("no ground truth for decision '" + d.id + "'");
        const Label y = it->second;
        if (y >= num_classes || d.predicted >= num_classes) throw IntegrityError("class index out of range");
        add_to_confusion(r.baseline, d.predicted, y, positive);
        add_to_confusion(d.kept ? r.kept : r.rejected, d.predicted, y, positive);
        ++r.class_counts[y];
        if (!d.kept) ++rejected_per_class[y];
    }
    r.rejection_rate = decisions.empty() ? 0.0
                                         : static_cast<double>(r.rejected.total()) /
                                               static_cast<double>(decisions.size());
    r.drift_rates.assign(num_classes, 0.0);
    for (Label c = 0; c < num_classes; ++c) {
        if (r.class_counts[c] > 0) {
            r.drift_rates[c] = static_cast<double>(rejected_per_class[c]) / static_cast<double>(r.class_counts[c]);
        }
    }
    return r;
}

double aut(std::span<const double> values) {
    if (values.size() < 2) throw DomainError("AUT needs at least two periods");
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < values.size(); ++i) sum += (values[i] + values[i + 1]) / 2.0;
    return sum / static_cast<double>(values.size() - 1);
}

namespace {

std::vector<double> ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t) r[order[t]] = avg;
        i = j + 1;
    }
    return r;
}

}  // namespace

double spearman_rho(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw DimensionError("spearman_rho: series lengths differ");
    if (x.size() < 2) throw DomainError("spearman_rho needs at least two points");
    const auto rx = ranks(x), ry = ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

namespace {

MetricValue metric_value(const Confusion& c, const std::string& metric) {
    if (metric == "f1") return c.f1();
    if (metric == "precision") return c.precision();
    if (metric == "recall") return c.recall();
    throw DomainError("unknown report metric '" + metric + "'");
}

const std::vector<std::string>& report_metrics() {
    static const std::vector<std::string> m = {"f1", "precision", "recall"};
    return m;
}

constexpr Partition kPartitions[] = {Partition::Baseline, Partition::Kept, Partition::Rejected};

}  // namespace

std::vector<double> TimeSeriesReport::series(const std::string& metric, Partition p) const {
    std::vector<double> out;
    for (const auto& pr : periods) out.push_back(metric_value(pr.partition(p), metric).value);
    return out;
}

std::vector<double> TimeSeriesReport::rejection_rates() const {
    std::vector<double> out;
    for (const auto& pr : periods) out.push_back(pr.rejection_rate);
    return out;
}

TimeSeriesReport report_from_decisions(const std::vector<std::vector<Decision>>& decisions,
                                       const std::vector<Dataset>& periods, const std::vector<std::int64_t>& starts,
                                       const LabelSpace& labels, Label positive) {
    if (decisions.size() != periods.size()) throw DimensionError("one decision list per period expected");
    TimeSeriesReport rep;
    rep.labels = labels;
    rep.positive = positive;
    for (std::size_t p = 0; p < periods.size(); ++p) {
        std::unordered_map<std::string, Label> truth;
        const auto& data = periods[p].labels() == labels ? periods[p] : periods[p].relabeled(labels);
        for (const auto& e : data) {
            if (!e.label) throw IntegrityError("period " + std::to_string(p) + ": example '" + e.id + "' has no label");
            truth.emplace(e.id, *e.label);
        }
        auto pr = period_metrics(decisions[p], truth, labels.size(), positive);
        pr.period = p;
        pr.start = p < starts.size() ? starts[p] : 0;
        rep.periods.push_back(std::move(pr));
    }
    for (const auto& m : report_metrics()) {
        for (auto part : kPartitions) rep.aut[m + "/" + partition_name(part)] = aut(rep.series(m, part));
    }
    return rep;
}

TimeSeriesReport evaluate_stream(const CalibratedEvaluator& ev, const TemporalSplit& split, Label positive,
                                 std::size_t threads) {
    if (split.test_periods.empty()) throw DomainError("evaluate_stream: no test periods");
    std::vector<std::vector<Decision>> decisions;
    for (std::size_t p = 0; p < split.test_periods.size(); ++p) {
        try {
            decisions.push_back(ev.decide_all(split.test_periods[p], threads));
        } catch (const DimensionError& e) {
            throw DimensionError("period " + std::to_string(p) + ": " + e.what());
        } catch (const LookupError& e) {
            throw LookupError("period " + std::to_string(p) + ": " + e.what());
        } catch (const DomainError& e) {
            throw DomainError("period " + std::to_string(p) + ": " + e.what());
        }
    }
    return report_from_decisions(decisions, split.test_periods, split.period_starts, ev.labels(), positive);
}

json report_to_json(const TimeSeriesReport& r) {
    auto confusion = [](const Confusion& c) {
        return json{{"tp", c.tp},
                    {"fp", c.fp},
                    {"tn", c.tn},
                    {"fn", c.fn},
                    {"f1", c.f1().value},
                    {"precision", c.precision().value},
                    {"recall", c.recall().value}};
    };
    json periods = json::array();
    for (const auto& p : r.periods) {
        json drift = json::object();
        json counts = json::object();
        for (Label c = 0; c < r.labels.size(); ++c) {
            drift[r.labels.name(c)] = p.drift_rates[c];
            counts[r.labels.name(c)] = p.class_counts[c];
        }
        periods.push_back({{"period", p.period},
                           {"start", p.start},
                           {"total", p.total()},
                           {"rejected", p.rejected_count()},
                           {"rejection_rate", p.rejection_rate},
                           {"baseline", confusion(p.baseline)},
                           {"kept", confusion(p.kept)},
                           {"rejected_partition", confusion(p.rejected)},
                           {"class_counts", counts},
                           {"drift_rates", drift}});
    }
    return {{"labels", r.labels.names()},
            {"positive", r.labels.name(r.positive)},
            {"periods", periods},
            {"aut", r.aut}};
}

std::string format_report_csv(const TimeSeriesReport& r) {
    std::string out = "period,start,partition,metric,value,degenerate\n";
    auto row = [&](const PeriodReport& p, const std::string& part, const std::string& metric, double v, bool degen) {
        out += std::to_string(p.period) + "," + std::to_string(p.start) + "," + part + "," + metric + "," +
               format_double(v) + "," + (degen ? "1" : "0") + "\n";
    };
    for (const auto& p : r.periods) {
        for (auto part : kPartitions) {
            const auto& c = p.partition(part);
            for (const auto& m : report_metrics()) {
                const auto v = metric_value(c, m);
                row(p, partition_name(part), m, v.value, v.degenerate);
            }
            row(p, partition_name(part), "count", static_cast<double>(c.total()), false);
        }
        row(p, "all", "rejection_rate", p.rejection_rate, p.total() == 0);
        for (Label c = 0; c < r.labels.size(); ++c) {
            row(p, "all", "drift_rate:" + r.labels.name(c), p.drift_rates[c], p.class_counts[c] == 0);
        }
    }
    return out;
}

}  // namespace confeval
