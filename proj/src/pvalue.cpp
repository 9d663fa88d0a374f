#include "confeval/pvalue.hpp"

#include "confeval/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

namespace confeval {

double pvalue(std::span<const double> pool, double alpha) {
    if (pool.empty()) throw DomainError("p-value of an empty pool");
    std::size_t count = 0;
    for (double a : pool) count += (a >= alpha);
    return static_cast<double>(count) / static_cast<double>(pool.size());
}

double pvalue_sorted(std::span<const double> sorted_pool, double alpha) {
    if (sorted_pool.empty()) throw DomainError("p-value of an empty pool");
    const auto first_ge = std::lower_bound(sorted_pool.begin(), sorted_pool.end(), alpha);
    const auto count = static_cast<std::size_t>(sorted_pool.end() - first_ge);
    return static_cast<double>(count) / static_cast<double>(sorted_pool.size());
}

double pvalue_sorted_without(std::span<const double> sorted_pool, double alpha, double self) {
    if (sorted_pool.size() < 2) throw DomainError("p-value of an empty pool (only the scored example)");
    const auto first_ge = std::lower_bound(sorted_pool.begin(), sorted_pool.end(), alpha);
    auto count = static_cast<std::size_t>(sorted_pool.end() - first_ge);
    if (self >= alpha) --count;
    return static_cast<double>(count) / static_cast<double>(sorted_pool.size() - 1);
}

double credibility_of(std::span<const double> pvals, Label predicted) {
    return pvals[predicted];
}

double confidence_of(std::span<const double> pvals, Label predicted) {
    double best_other = 0.0;
    for (Label c = 0; c < pvals.size(); ++c) {
        if (c != predicted) best_other = std::max(best_other, pvals[c]);
    }
    return 1.0 - best_other;
}

PValueRecord make_record(std::string id, Label predicted, std::optional<Label> truth, std::vector<double> pvals,
                         std::vector<double> raw_scores, std::size_t fold) {
    if (predicted >= pvals.size()) throw DomainError("predicted class outside the p-value vector");
    for (double p : pvals) {
        if (!(p >= 0.0 && p <= 1.0)) throw DomainError("p-value outside [0, 1]");
    }
    PValueRecord r;
    r.id = std::move(id);
    r.predicted = predicted;
    r.truth = truth;
    r.credibility = credibility_of(pvals, predicted);
    r.confidence = confidence_of(pvals, predicted);
    r.pvals = std::move(pvals);
    r.raw_scores = std::move(raw_scores);
    r.fold = fold;
    return r;
}

Quartiles quartiles(std::vector<double> values) {
    Quartiles q;
    q.count = values.size();
    if (values.empty()) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        q.min = q.q1 = q.median = q.q3 = q.max = nan;
        return q;
    }
    std::sort(values.begin(), values.end());
    auto at = [&](double frac) {
        const double pos = frac * static_cast<double>(values.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, values.size() - 1);
        const double w = pos - static_cast<double>(lo);
        return values[lo] + w * (values[hi] - values[lo]);
    };
    q.min = values.front();
    q.q1 = at(0.25);
    q.median = at(0.5);
    q.q3 = at(0.75);
    q.max = values.back();
    return q;
}

std::vector<AlphaGroup> alpha_assessment(std::span<const PValueRecord> records, std::size_t num_classes,
                                         bool label_conditional) {
    std::vector<AlphaGroup> groups;
    for (Label c = 0; c < num_classes; ++c) {
        groups.push_back({c, true, {}, {}});
        groups.push_back({c, false, {}, {}});
    }
    for (const auto& r : records) {
        if (!r.truth) throw DomainError("alpha assessment needs ground truth (record '" + r.id + "')");
        if (r.predicted >= num_classes) throw DomainError("record '" + r.id + "' predicts an unknown class");
        auto& g = groups[2 * r.predicted + (*r.truth == r.predicted ? 0 : 1)];
        if (label_conditional) {
            g.pvalues.push_back(r.credibility);
        } else {
            g.pvalues.insert(g.pvalues.end(), r.pvals.begin(), r.pvals.end());
        }
    }
    for (auto& g : groups) g.summary = quartiles(g.pvalues);
    return groups;
}

namespace {

std::string num(double v) {
    if (std::isnan(v)) return "";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
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

}  // namespace

std::string format_alpha_csv(std::span<const AlphaGroup> groups, const LabelSpace& labels) {
    std::string out = "class,group,count,min,q1,median,q3,max,pvalues\n";
    for (const auto& g : groups) {
        out += labels.name(g.cls);
        out += g.correct ? ",correct," : ",incorrect,";
        out += std::to_string(g.summary.count) + "," + num(g.summary.min) + "," + num(g.summary.q1) + "," +
               num(g.summary.median) + "," + num(g.summary.q3) + "," + num(g.summary.max) + ",";
        for (std::size_t i = 0; i < g.pvalues.size(); ++i) {
            if (i) out += ';';
            out += num(g.pvalues[i]);
        }
        out += '\n';
    }
    return out;
}

std::string format_records_csv(std::span<const PValueRecord> records, const LabelSpace& labels) {
    std::string out = "id,predicted,truth,fold";
    for (const auto& n : labels.names()) out += ",p:" + n;
    out += '\n';
    for (const auto& r : records) {
        out += r.id + "," + labels.name(r.predicted) + "," + (r.truth ? labels.name(*r.truth) : std::string()) + "," +
               std::to_string(r.fold);
        for (double p : r.pvals) out += "," + num(p);
        out += '\n';
    }
    return out;
}

std::vector<PValueRecord> parse_records_csv(std::string_view text, LabelSpace& labels_out) {
    std::vector<PValueRecord> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    std::size_t num_classes = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        auto line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        auto cells = split_csv(line);
        if (line_no == 1) {
            if (cells.size() < 5 || cells[0] != "id" || cells[1] != "predicted" || cells[2] != "truth" ||
                cells[3] != "fold") {
                throw ParseError(line_no, "records header must be id,predicted,truth,fold,p:<class>...");
            }
            std::vector<std::string> names;
            for (std::size_t i = 4; i < cells.size(); ++i) {
                if (cells[i].substr(0, 2) != "p:") throw ParseError(line_no, "p-value columns must be named p:<class>");
                names.emplace_back(cells[i].substr(2));
            }
            labels_out = LabelSpace(std::move(names));
            num_classes = labels_out.size();
            continue;
        }
        if (cells.size() != num_classes + 4) throw ParseError(line_no, "wrong column count");
        auto predicted = labels_out.find(cells[1]);
        if (!predicted) throw ParseError(line_no, "unknown predicted class '" + std::string(cells[1]) + "'");
        std::optional<Label> truth;
        if (!cells[2].empty()) {
            truth = labels_out.find(cells[2]);
            if (!truth) throw ParseError(line_no, "unknown truth class '" + std::string(cells[2]) + "'");
        }
        std::size_t fold = 0;
        if (std::from_chars(cells[3].data(), cells[3].data() + cells[3].size(), fold).ec != std::errc{}) {
            throw ParseError(line_no, "bad fold index");
        }
        std::vector<double> pvals;
        for (std::size_t i = 4; i < cells.size(); ++i) {
            double v{};
            auto [ptr, ec] = std::from_chars(cells[i].data(), cells[i].data() + cells[i].size(), v);
            if (ec != std::errc{} || ptr != cells[i].data() + cells[i].size() || !(v >= 0.0 && v <= 1.0)) {
                throw ParseError(line_no, "bad p-value '" + std::string(cells[i]) + "'");
            }
            pvals.push_back(v);
        }
        out.push_back(make_record(std::string(cells[0]), *predicted, truth, std::move(pvals), {}, fold));
    }
    if (line_no == 0) throw ParseError(1, "empty records file");
    return out;
}

}  // namespace confeval
