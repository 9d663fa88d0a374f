#include "confeval/dataset.hpp"

#include "confeval/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

namespace confeval {

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IntegrityError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IntegrityError("cannot write " + path.string());
    out << text;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.push_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

std::string_view strip_cr(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
    T v{};
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (!s.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last || first == last) return std::nullopt;
    return v;
}

// Iterates non-empty lines with their 1-based line numbers.
template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        ++line_no;
        fn(line_no, strip_cr(text.substr(pos, nl - pos)));
        pos = nl + 1;
    }
}

}  // namespace

SparseVector make_sparse(std::vector<Feature> entries) {
    std::sort(entries.begin(), entries.end(),
              [](const Feature& a, const Feature& b) { return a.index < b.index; });
    SparseVector out;
    out.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (i > 0 && entries[i].index == entries[i - 1].index) {
            throw DomainError("duplicate feature index " + std::to_string(entries[i].index));
        }
        if (entries[i].value != 0.0) out.push_back(entries[i]);
    }
    return out;
}

double dot(const SparseVector& x, std::span<const double> dense) {
    double s = 0.0;
    for (const auto& f : x) {
        if (f.index < dense.size()) s += f.value * dense[f.index];
    }
    return s;
}

double squared_distance(const SparseVector& x, std::span<const double> dense) {
    double s = 0.0;
    auto it = x.begin();
    for (std::size_t d = 0; d < dense.size(); ++d) {
        double xd = 0.0;
        if (it != x.end() && it->index == d) {
            xd = it->value;
            ++it;
        }
        const double diff = xd - dense[d];
        s += diff * diff;
    }
    for (; it != x.end(); ++it) s += it->value * it->value;
    return s;
}

double squared_distance(const SparseVector& a, const SparseVector& b) {
    double s = 0.0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() || ib != b.end()) {
        double diff;
        if (ib == b.end() || (ia != a.end() && ia->index < ib->index)) {
            diff = ia->value;
            ++ia;
        } else if (ia == a.end() || ib->index < ia->index) {
            diff = -ib->value;
            ++ib;
        } else {
            diff = ia->value - ib->value;
            ++ia;
            ++ib;
        }
        s += diff * diff;
    }
    return s;
}

std::vector<double> to_dense(const SparseVector& x, std::size_t dimensionality) {
    std::vector<double> out(dimensionality, 0.0);
    for (const auto& f : x) {
        if (f.index >= dimensionality) throw DimensionError("feature index beyond dimensionality");
        out[f.index] = f.value;
    }
    return out;
}

// ---------------------------------------------------------------- LabelSpace

LabelSpace::LabelSpace(std::vector<std::string> names) : names_(std::move(names)) {
    std::set<std::string> seen;
    for (const auto& n : names_) {
        if (n.empty()) throw DomainError("empty class name");
        if (!seen.insert(n).second) throw DomainError("duplicate class name '" + n + "'");
    }
}

std::optional<Label> LabelSpace::find(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i] == name) return i;
    }
    return std::nullopt;
}

Label LabelSpace::index_of(std::string_view name) const {
    if (auto l = find(name)) return *l;
    throw LookupError("unknown class '" + std::string(name) + "'");
}

// ------------------------------------------------------------------- Dataset

Dataset::Dataset(LabelSpace labels, std::size_t dimensionality, std::vector<Example> examples)
    : labels_(std::move(labels)), dimensionality_(dimensionality), examples_(std::move(examples)) {
    std::unordered_set<std::string> ids;
    ids.reserve(examples_.size());
    for (const auto& e : examples_) {
        if (!ids.insert(e.id).second) throw IntegrityError("duplicate example id '" + e.id + "'");
        if (e.label && *e.label >= labels_.size()) {
            throw IntegrityError("example '" + e.id + "' has a label outside the label space");
        }
        for (std::size_t i = 0; i < e.features.size(); ++i) {
            const auto& f = e.features[i];
            if (f.index >= dimensionality_) {
                throw DimensionError("example '" + e.id + "' has feature index " +
                                     std::to_string(f.index) + " >= dimensionality " +
                                     std::to_string(dimensionality_));
            }
            if (i > 0 && e.features[i - 1].index >= f.index) {
                throw IntegrityError("example '" + e.id + "' has unsorted or repeated feature indices");
            }
            if (f.value == 0.0) throw IntegrityError("example '" + e.id + "' stores an explicit zero");
        }
    }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    std::vector<Example> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(examples_.at(i));
    return Dataset(labels_, dimensionality_, std::move(out));
}

Dataset Dataset::without(std::span<const std::size_t> indices) const {
    std::vector<char> drop(examples_.size(), 0);
    for (auto i : indices) drop.at(i) = 1;
    std::vector<Example> out;
    out.reserve(examples_.size() - std::min(indices.size(), examples_.size()));
    for (std::size_t i = 0; i < examples_.size(); ++i) {
        if (!drop[i]) out.push_back(examples_[i]);
    }
    return Dataset(labels_, dimensionality_, std::move(out));
}

Dataset Dataset::relabeled(const LabelSpace& target) const {
    if (target == labels_) return *this;
    std::vector<Example> out = examples_;
    for (auto& e : out) {
        if (!e.label) continue;
        const auto& name = labels_.name(*e.label);
        auto mapped = target.find(name);
        if (!mapped) throw LookupError("class '" + name + "' is not in the target label space");
        e.label = *mapped;
    }
    return Dataset(target, dimensionality_, std::move(out));
}

bool Dataset::fully_labeled() const noexcept {
    return std::all_of(examples_.begin(), examples_.end(),
                       [](const Example& e) { return e.label.has_value(); });
}

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(labels_.size(), 0);
    for (const auto& e : examples_) {
        if (e.label) ++counts[*e.label];
    }
    return counts;
}

Dataset make_dataset(std::vector<LabeledRow> rows, std::size_t dimensionality, LabelSpace label_space) {
    if (label_space.empty()) {
        std::set<std::string> names;
        for (const auto& r : rows) {
            if (r.label) names.insert(*r.label);
        }
        label_space = LabelSpace(std::vector<std::string>(names.begin(), names.end()));
    }
    std::vector<Example> examples;
    examples.reserve(rows.size());
    std::size_t max_dim = 0;
    for (auto& r : rows) {
        Example e;
        e.id = std::move(r.id);
        e.timestamp = r.timestamp;
        e.features = make_sparse(std::move(r.features));
        if (!e.features.empty()) max_dim = std::max<std::size_t>(max_dim, e.features.back().index + 1);
        if (r.label) e.label = label_space.index_of(*r.label);
        examples.push_back(std::move(e));
    }
    return Dataset(std::move(label_space), dimensionality == 0 ? max_dim : dimensionality,
                   std::move(examples));
}

// ----------------------------------------------------------------------- I/O

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw DomainError("cannot format number");
    return std::string(buf, ptr);
}

Dataset parse_dense_csv(std::string_view text) {
    std::vector<LabeledRow> rows;
    std::size_t dims = 0;
    bool header_seen = false;
    std::unordered_set<std::string> ids;
    for_each_line(text, [&](std::size_t line_no, std::string_view line) {
        if (line.empty()) return;
        auto cells = split(line, ',');
        if (!header_seen) {
            if (cells.size() < 3 || cells[0] != "id" || cells[1] != "timestamp" || cells[2] != "label") {
                throw ParseError(line_no, "header must start with id,timestamp,label");
            }
            for (std::size_t i = 3; i < cells.size(); ++i) {
                if (cells[i] != "f" + std::to_string(i - 3)) {
                    throw ParseError(line_no, "feature column " + std::to_string(i - 3) + " must be named f" +
                                                  std::to_string(i - 3));
                }
            }
            dims = cells.size() - 3;
            header_seen = true;
            return;
        }
        if (cells.size() != dims + 3) {
            throw ParseError(line_no, "expected " + std::to_string(dims + 3) + " columns, found " +
                                          std::to_string(cells.size()));
        }
        LabeledRow row;
        row.id = std::string(cells[0]);
        if (row.id.empty()) throw ParseError(line_no, "empty id");
        if (!ids.insert(row.id).second) throw IntegrityError("line " + std::to_string(line_no) +
                                                             ": duplicate id '" + row.id + "'");
        auto ts = parse_number<std::int64_t>(cells[1]);
        if (!ts) throw ParseError(line_no, "non-integer timestamp '" + std::string(cells[1]) + "'");
        row.timestamp = *ts;
        if (!cells[2].empty()) row.label = std::string(cells[2]);
        for (std::size_t i = 0; i < dims; ++i) {
            auto v = parse_number<double>(cells[i + 3]);
            if (!v || !std::isfinite(*v)) {
                throw ParseError(line_no, "non-numeric feature f" + std::to_string(i) + " '" +
                                              std::string(cells[i + 3]) + "'");
            }
            if (*v != 0.0) row.features.push_back({static_cast<std::uint32_t>(i), *v});
        }
        rows.push_back(std::move(row));
    });
    if (!header_seen) throw ParseError(1, "missing header");
    return make_dataset(std::move(rows), dims);
}

Dataset load_dense_csv(const std::filesystem::path& path) {
    return parse_dense_csv(read_file(path));
}

std::string format_dense_csv(const Dataset& d) {
    std::string out = "id,timestamp,label";
    for (std::size_t i = 0; i < d.dimensionality(); ++i) out += ",f" + std::to_string(i);
    out += '\n';
    for (const auto& e : d) {
        out += e.id;
        out += ',';
        out += std::to_string(e.timestamp);
        out += ',';
        if (e.label) out += d.labels().name(*e.label);
        auto it = e.features.begin();
        for (std::size_t i = 0; i < d.dimensionality(); ++i) {
            out += ',';
            if (it != e.features.end() && it->index == i) {
                out += format_double(it->value);
                ++it;
            } else {
                out += '0';
            }
        }
        out += '\n';
    }
    return out;
}

void save_dense_csv(const Dataset& d, const std::filesystem::path& path) {
    write_file(path, format_dense_csv(d));
}

Dataset parse_sparse(std::string_view text) {
    std::vector<LabeledRow> rows;
    for_each_line(text, [&](std::size_t line_no, std::string_view line) {
        std::vector<std::string_view> tokens;
        for (auto t : split(line, ' ')) {
            if (!t.empty()) tokens.push_back(t);
        }
        if (tokens.empty()) return;
        if (tokens.size() < 2) throw ParseError(line_no, "expected `label timestamp idx:val ...`");
        LabeledRow row;
        row.id = "line-" + std::to_string(line_no);
        if (tokens[0] != "?") row.label = std::string(tokens[0]);
        auto ts = parse_number<std::int64_t>(tokens[1]);
        if (!ts) throw ParseError(line_no, "non-integer timestamp '" + std::string(tokens[1]) + "'");
        row.timestamp = *ts;
        std::optional<std::int64_t> prev;
        for (std::size_t i = 2; i < tokens.size(); ++i) {
            auto colon = tokens[i].find(':');
            if (colon == std::string_view::npos) {
                throw ParseError(line_no, "feature '" + std::string(tokens[i]) + "' is not idx:val");
            }
            auto idx = parse_number<std::int64_t>(tokens[i].substr(0, colon));
            auto val = parse_number<double>(tokens[i].substr(colon + 1));
            if (!idx) throw ParseError(line_no, "bad feature index in '" + std::string(tokens[i]) + "'");
            if (*idx < 0) throw ParseError(line_no, "negative feature index " + std::to_string(*idx));
            if (*idx > static_cast<std::int64_t>(UINT32_MAX - 1)) throw ParseError(line_no, "feature index too large");
            if (!val || !std::isfinite(*val)) {
                throw ParseError(line_no, "bad feature value in '" + std::string(tokens[i]) + "'");
            }
            if (prev && *idx <= *prev) {
                throw ParseError(line_no, "feature indices must be strictly increasing (" +
                                              std::to_string(*prev) + " then " + std::to_string(*idx) + ")");
            }
            prev = *idx;
            if (*val != 0.0) row.features.push_back({static_cast<std::uint32_t>(*idx), *val});
        }
        rows.push_back(std::move(row));
    });
    return make_dataset(std::move(rows));
}

Dataset load_sparse(const std::filesystem::path& path) {
    return parse_sparse(read_file(path));
}

std::string format_sparse(const Dataset& d) {
    std::string out;
    for (const auto& e : d) {
        out += e.label ? d.labels().name(*e.label) : std::string("?");
        out += ' ';
        out += std::to_string(e.timestamp);
        for (const auto& f : e.features) {
            out += ' ';
            out += std::to_string(f.index);
            out += ':';
            out += format_double(f.value);
        }
        out += '\n';
    }
    return out;
}

void save_sparse(const Dataset& d, const std::filesystem::path& path) {
    write_file(path, format_sparse(d));
}

// ------------------------------------------------------------ temporal split

TemporalSplit temporal_split(const Dataset& d, std::int64_t train_end, std::int64_t period_length) {
    if (d.empty()) throw ConfigError("cannot split an empty dataset");
    if (period_length <= 0) throw ConfigError("period_length must be positive");
    TemporalSplit out;
    out.train_end = train_end;
    out.period_length = period_length;

    std::vector<std::size_t> train_idx;
    std::map<std::int64_t, std::vector<std::size_t>> by_period;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto ts = d[i].timestamp;
        if (ts <= train_end) {
            train_idx.push_back(i);
        } else {
            by_period[(ts - train_end - 1) / period_length].push_back(i);
        }
    }
    if (train_idx.empty()) {
        throw ConfigError("train_end " + std::to_string(train_end) +
                          " precedes every timestamp; no training examples");
    }
    out.train = d.subset(train_idx);
    if (!by_period.empty()) {
        const auto last = by_period.rbegin()->first;
        for (std::int64_t p = 0; p <= last; ++p) {
            out.period_starts.push_back(train_end + 1 + p * period_length);
            auto it = by_period.find(p);
            if (it == by_period.end()) {
                out.test_periods.push_back(d.subset(std::span<const std::size_t>{}));
            } else {
                out.test_periods.push_back(d.subset(it->second));
            }
        }
    }
    return out;
}

// ----------------------------------------------------------------------- KL

std::vector<double> feature_frequencies(const Dataset& d, std::size_t dimensionality) {
    std::vector<double> counts(dimensionality == 0 ? d.dimensionality() : dimensionality, 0.0);
    for (const auto& e : d) {
        for (const auto& f : e.features) {
            if (f.index < counts.size()) counts[f.index] += 1.0;
        }
    }
    return counts;
}

double kl_divergence(std::span<const double> p_counts, std::span<const double> q_counts, double smoothing) {
    if (p_counts.size() != q_counts.size()) {
        throw DimensionError("KL divergence inputs differ in length (" + std::to_string(p_counts.size()) +
                             " vs " + std::to_string(q_counts.size()) + ")");
    }
    if (!(smoothing > 0.0)) throw DomainError("KL smoothing must be positive");
    if (p_counts.empty()) return 0.0;
    double p_total = 0.0;
    double q_total = 0.0;
    for (std::size_t i = 0; i < p_counts.size(); ++i) {
        if (p_counts[i] < 0.0 || q_counts[i] < 0.0) throw DomainError("negative frequency");
        p_total += p_counts[i] + smoothing;
        q_total += q_counts[i] + smoothing;
    }
    double kl = 0.0;
    for (std::size_t i = 0; i < p_counts.size(); ++i) {
        const double p = (p_counts[i] + smoothing) / p_total;
        const double q = (q_counts[i] + smoothing) / q_total;
        kl += p * std::log(p / q);
    }
    // Rounding can leave a tiny negative value when P == Q.
    return std::max(kl, 0.0);
}

}  // namespace confeval
