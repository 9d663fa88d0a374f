#pragma once

#include "confeval/dataset.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace confeval {

// |{a in pool : a >= alpha}| / |pool|. Throws DomainError on an empty pool.
double pvalue(std::span<const double> pool, double alpha);

// Same count on a pool sorted ascending, in O(log n).
double pvalue_sorted(std::span<const double> sorted_pool, double alpha);

// Like pvalue_sorted but with one occurrence of `self` removed from the pool.
double pvalue_sorted_without(std::span<const double> sorted_pool, double alpha, double self);

struct PValueRecord {
    std::string id;
    Label predicted = 0;
    std::optional<Label> truth;
    std::vector<double> pvals;       // one per class
    double credibility = 0.0;        // pvals[predicted]
    double confidence = 0.0;         // 1 - max_{c != predicted} pvals[c]
    std::vector<double> raw_scores;  // classifier scores, one per class (may be empty)
    std::size_t fold = 0;
};

// Fills credibility and confidence from pvals.
PValueRecord make_record(std::string id, Label predicted, std::optional<Label> truth, std::vector<double> pvals,
                         std::vector<double> raw_scores = {}, std::size_t fold = 0);

double credibility_of(std::span<const double> pvals, Label predicted);
double confidence_of(std::span<const double> pvals, Label predicted);

// Five-number summary; quartiles interpolate linearly between order
// statistics at position q * (n - 1).
struct Quartiles {
    std::size_t count = 0;
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
};

Quartiles quartiles(std::vector<double> values);

struct AlphaGroup {
    Label cls = 0;
    bool correct = true;
    std::vector<double> pvalues;
    Quartiles summary;
};

// Groups records by predicted class and correctness. Label-conditional mode
// takes the credibility of each record; otherwise every class's p-value is
// included. Rows: for each class, correct then incorrect.
std::vector<AlphaGroup> alpha_assessment(std::span<const PValueRecord> records, std::size_t num_classes,
                                         bool label_conditional = true);

std::string format_alpha_csv(std::span<const AlphaGroup> groups, const LabelSpace& labels);

// Records CSV: `id,predicted,truth,fold,p:<class>...` (truth empty when unknown).
std::string format_records_csv(std::span<const PValueRecord> records, const LabelSpace& labels);
std::vector<PValueRecord> parse_records_csv(std::string_view text, LabelSpace& labels_out);

}  // namespace confeval
