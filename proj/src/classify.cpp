#include "ndd/classify.hpp"

#include <cmath>

#include "ndd/error.hpp"
#include "ndd/util.hpp"

namespace ndd {

namespace {

void check_same_metric(const BaselineCurve& senior_base,
                       const BaselineCurve& young_base) {
    if (!(senior_base.metric == young_base.metric)) {
        throw ValidationError("baselines measure different metrics (" +
                              to_string(senior_base.metric) + " vs " +
                              to_string(young_base.metric) + ")");
    }
}

}  // namespace

void validate_range(const PercentileRange& range) {
    if (range.lo < 1 || range.hi > 99 || range.lo >= range.hi) {
        throw ValidationError("percentile range needs 1 <= lo < hi <= 99, got [" +
                              std::to_string(range.lo) + ", " +
                              std::to_string(range.hi) + "]");
    }
    if (range.step < 1) {
        throw ValidationError("percentile step must be >= 1");
    }
}

PercentileRange optimize_percentile_range(
    std::span<const EmpiricalCdf> validation_cdfs,
    const BaselineCurve& senior_base, const BaselineCurve& young_base,
    int min_width, int step) {
    if (validation_cdfs.empty()) {
        throw ValidationError("cannot optimize on an empty validation set");
    }
    check_same_metric(senior_base, young_base);
    if (min_width < 1 || min_width > 98) {
        throw ValidationError("min_width must be in [1, 98]");
    }
    if (step < 1) {
        throw ValidationError("grid step must be >= 1");
    }

    const double n = static_cast<double>(validation_cdfs.size());
    PercentileRange best;
    bool have_best = false;
    for (int lo = 1; lo <= 99; ++lo) {
        for (int hi = lo + min_width; hi <= 99; ++hi) {
            double margin_sum = 0.0;
            for (const EmpiricalCdf& p : validation_cdfs) {
                margin_sum += range_distance(p, young_base.cdf, lo, hi, step) -
                              range_distance(p, senior_base.cdf, lo, hi, step);
            }
            double j = margin_sum / n;
            // Strictly better objective wins; on exact ties, the wider
            // range, then the smaller lo. The scan order (lo then hi
            // ascending) makes > on width sufficient for the lo rule.
            bool better = false;
            if (!have_best || j > best.objective) {
                better = true;
            } else if (j == best.objective) {
                int width = hi - lo;
                int best_width = best.hi - best.lo;
                if (width > best_width) better = true;
            }
            if (better) {
                best = PercentileRange{lo, hi, step, j};
                have_best = true;
            }
        }
    }
    if (!have_best) {
        throw ValidationError("no feasible percentile range for min_width " +
                              std::to_string(min_width));
    }
    return best;
}

Distances participant_distances(const EmpiricalCdf& p_cdf,
                                const BaselineCurve& senior_base,
                                const BaselineCurve& young_base,
                                const PercentileRange& range) {
    validate_range(range);
    check_same_metric(senior_base, young_base);
    Distances d;
    d.d_senior =
        range_distance(p_cdf, senior_base.cdf, range.lo, range.hi, range.step);
    d.d_young =
        range_distance(p_cdf, young_base.cdf, range.lo, range.hi, range.step);
    return d;
}

Cohort classify_label(double d_senior, double d_young) {
    if (!std::isfinite(d_senior) || !std::isfinite(d_young) || d_senior < 0.0 ||
        d_young < 0.0) {
        throw ValidationError("distances must be finite and non-negative");
    }
    return d_senior < d_young ? Cohort::senior : Cohort::young;
}

AccuracyReport evaluate_accuracy(std::span<const TestCase> test_cases,
                                 const BaselineCurve& senior_base,
                                 const BaselineCurve& young_base,
                                 const PercentileRange& range) {
    if (test_cases.empty()) {
        throw ValidationError("cannot evaluate accuracy on an empty test set");
    }
    validate_range(range);
    check_same_metric(senior_base, young_base);

    AccuracyReport report;
    report.range = range;
    report.n_total = test_cases.size();
    report.rows.reserve(test_cases.size());
    for (const TestCase& tc : test_cases) {
        Distances d = participant_distances(tc.cdf, senior_base, young_base,
                                            range);
        AccuracyRow row;
        row.result.participant_id = tc.participant_id;
        row.result.d_young = d.d_young;
        row.result.d_senior = d.d_senior;
        row.result.label = classify_label(d.d_senior, d.d_young);
        row.true_cohort = tc.true_cohort;
        row.correct = row.result.label == tc.true_cohort;
        if (row.correct) ++report.n_correct;
        report.rows.push_back(std::move(row));
    }
    report.accuracy = static_cast<double>(report.n_correct) /
                      static_cast<double>(report.n_total);
    return report;
}

ValidationScreen screen_validation(
    std::span<const std::pair<std::string, EmpiricalCdf>> validation,
    const BaselineCurve& senior_base, double tau) {
    if (!std::isfinite(tau) || tau <= 0.0 || tau > 1.0) {
        throw ValidationError("tau must be in (0, 1]");
    }
    ValidationScreen screen;
    for (std::size_t i = 0; i < validation.size(); ++i) {
        double d = ks_statistic(validation[i].second, senior_base.cdf);
        if (d > tau) {
            screen.flagged.push_back(AnomalyFlag{validation[i].first,
                                                 AnomalyLevel::participant, d,
                                                 1});
        } else {
            screen.kept_indices.push_back(i);
        }
    }
    return screen;
}

}  // namespace ndd
