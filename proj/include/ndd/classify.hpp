#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ndd/baseline.hpp"
#include "ndd/stats.hpp"
#include "ndd/telemetry.hpp"

namespace ndd {

// An integer percentile window [lo, hi] evaluated on a fixed grid. step and
// the bounds fully determine every distance computed with the range, so they
// travel together in artifacts.
struct PercentileRange {
    int lo = 1;
    int hi = 99;
    int step = 1;
    double objective = 0.0;  // mean separation margin at the optimum
};

void validate_range(const PercentileRange& range);

// Exhaustive grid search over integer pairs (lo, hi) with 1 <= lo < hi <= 99
// and hi - lo >= min_width. The objective J(lo, hi) is the mean over
// validation participants of
//   range_distance(P, young) - range_distance(P, senior).
// Returns the argmax; ties prefer the larger width, then the smaller lo.
PercentileRange optimize_percentile_range(
    std::span<const EmpiricalCdf> validation_cdfs,
    const BaselineCurve& senior_base, const BaselineCurve& young_base,
    int min_width, int step);

struct Distances {
    double d_senior = 0.0;
    double d_young = 0.0;
};

Distances participant_distances(const EmpiricalCdf& p_cdf,
                                const BaselineCurve& senior_base,
                                const BaselineCurve& young_base,
                                const PercentileRange& range);

// Senior iff strictly closer to the senior baseline; the tie goes to young.
Cohort classify_label(double d_senior, double d_young);

struct ClassificationResult {
    std::string participant_id;
    double d_young = 0.0;
    double d_senior = 0.0;
    Cohort label = Cohort::young;
};

struct TestCase {
    std::string participant_id;
    EmpiricalCdf cdf;
    Cohort true_cohort = Cohort::young;
};

struct AccuracyRow {
    ClassificationResult result;
    Cohort true_cohort = Cohort::young;
    bool correct = false;
};

struct AccuracyReport {
    std::size_t n_total = 0;
    std::size_t n_correct = 0;
    double accuracy = 0.0;  // n_correct / n_total, the exact quotient
    std::vector<AccuracyRow> rows;
    PercentileRange range;
};

AccuracyReport evaluate_accuracy(std::span<const TestCase> test_cases,
                                 const BaselineCurve& senior_base,
                                 const BaselineCurve& young_base,
                                 const PercentileRange& range);

// Pre-optimization screen for validation participants whose curves sit far
// from the senior baseline. One pass, no greedy loop: each cdf is compared
// to the fixed senior baseline and flagged when the KS distance exceeds tau.
struct ValidationScreen {
    std::vector<std::size_t> kept_indices;  // into the input list
    std::vector<AnomalyFlag> flagged;
};

ValidationScreen screen_validation(
    std::span<const std::pair<std::string, EmpiricalCdf>> validation,
    const BaselineCurve& senior_base, double tau);

}  // namespace ndd
