#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ndd {

// Empirical cumulative distribution function of a real-valued sample.
// Stored as sorted distinct values with cumulative sample counts, so
// F(values[i]) == cum_counts[i] / n exactly and the final probability is 1.
class EmpiricalCdf {
public:
    // Empty placeholder (sample_count 0). Only valid as a slot to assign
    // into; every query except sample_count and cdf requires steps.
    EmpiricalCdf() = default;

    // Reconstructs a CDF from its steps (deserialization path). Values must be
    // finite and strictly increasing, counts strictly increasing; the last
    // count is the sample size.
    EmpiricalCdf(std::vector<double> values, std::vector<std::uint64_t> cum_counts);

    std::uint64_t sample_count() const {
        return counts_.empty() ? 0 : counts_.back();
    }
    const std::vector<double>& values() const { return values_; }
    const std::vector<std::uint64_t>& cum_counts() const { return counts_; }

    double cum_prob(std::size_t i) const {
        return static_cast<double>(counts_[i]) / static_cast<double>(counts_.back());
    }

    // F(x) = (#samples <= x) / n.
    double cdf(double x) const;

    double min_value() const { return values_.front(); }
    double max_value() const { return values_.back(); }

    bool operator==(const EmpiricalCdf&) const = default;

private:
    std::vector<double> values_;
    std::vector<std::uint64_t> counts_;
};

// Builds the ECDF of a sample. Duplicates merge into a single step.
// Throws ValidationError on an empty sample or any non-finite value.
EmpiricalCdf build_cdf(std::span<const double> samples);

// Smallest sample value v with F(v) >= percent/100 (left-continuous inverse,
// type-1). percent must lie in (0, 100]. The result is always a member of the
// underlying sample.
double quantile(const EmpiricalCdf& cdf, double percent);

// Two-sample Kolmogorov-Smirnov statistic: the supremum of |F_a(x) - F_b(x)|
// over the union of both step locations. Computed with integer cross products
// so the result is exact (one correctly rounded division at the end) and
// symmetric in its arguments.
double ks_statistic(const EmpiricalCdf& a, const EmpiricalCdf& b);

// Kolmogorov survival function Q_KS(lambda) = 2 * sum_{k>=1} (-1)^{k-1}
// exp(-2 k^2 lambda^2), truncated once a term drops below 1e-12 and clamped
// to [0,1]. Values within the truncation resolution of 1 snap to exactly 1,
// which keeps the function non-increasing across the near-zero-lambda
// plateau.
double ks_series_q(double lambda);

// Asymptotic two-sample p-value with the usual small-sample correction:
//   n_e    = n1*n2 / (n1+n2)
//   lambda = (sqrt(n_e) + 0.12 + 0.11/sqrt(n_e)) * d
//   p      = Q_KS(lambda)
double ks_pvalue(double d, std::uint64_t n1, std::uint64_t n2);

struct KsResult {
    double d = 0.0;
    double p_value = 1.0;
    std::uint64_t n1 = 0;
    std::uint64_t n2 = 0;
};

KsResult ks_test(const EmpiricalCdf& a, const EmpiricalCdf& b);

// Mean absolute quantile gap over the integer percentile grid
// lo, lo+step, ..., <= hi. Distances live in the quantile (value) domain, so
// the result carries the sample's units. Requires 1 <= lo < hi <= 99 and
// step >= 1. Symmetric in a and b.
double range_distance(const EmpiricalCdf& a, const EmpiricalCdf& b,
                      int lo, int hi, int step);

}  // namespace ndd
