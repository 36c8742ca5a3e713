#include "ndd/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "ndd/error.hpp"

namespace ndd {

EmpiricalCdf::EmpiricalCdf(std::vector<double> values, std::vector<std::uint64_t> cum_counts)
    : values_(std::move(values)), counts_(std::move(cum_counts)) {
    if (values_.empty() || values_.size() != counts_.size()) {
        throw ValidationError("EmpiricalCdf: step vectors must be non-empty and equal-length");
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!std::isfinite(values_[i])) {
            throw ValidationError("EmpiricalCdf: non-finite step value");
        }
        if (i > 0 && !(values_[i - 1] < values_[i])) {
            throw ValidationError("EmpiricalCdf: step values must be strictly increasing");
        }
        if (counts_[i] == 0 || (i > 0 && counts_[i - 1] >= counts_[i])) {
            throw ValidationError("EmpiricalCdf: cumulative counts must be strictly increasing");
        }
    }
}

double EmpiricalCdf::cdf(double x) const {
    const auto it = std::upper_bound(values_.begin(), values_.end(), x);
    if (it == values_.begin()) {
        return 0.0;
    }
    const auto i = static_cast<std::size_t>(it - values_.begin()) - 1;
    return cum_prob(i);
}

EmpiricalCdf build_cdf(std::span<const double> samples) {
    if (samples.empty()) {
        throw ValidationError("build_cdf: empty sample");
    }
    std::vector<double> sorted(samples.begin(), samples.end());
    for (const double v : sorted) {
        if (!std::isfinite(v)) {
            throw ValidationError("build_cdf: non-finite sample value");
        }
    }
    std::sort(sorted.begin(), sorted.end());

    std::vector<double> values;
    std::vector<std::uint64_t> counts;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (values.empty() || sorted[i] != values.back()) {
            values.push_back(sorted[i]);
            counts.push_back(i + 1);
        } else {
            counts.back() = i + 1;
        }
    }
    return EmpiricalCdf(std::move(values), std::move(counts));
}

double quantile(const EmpiricalCdf& cdf, double percent) {
    if (!(percent > 0.0 && percent <= 100.0)) {
        throw ValidationError("quantile: percent must be in (0,100]");
    }
    const std::uint64_t n = cdf.sample_count();
    if (n == 0) {
        throw ValidationError("quantile: empty cdf");
    }
    // Smallest cumulative count c with c/n >= percent/100, i.e. ceil(p*n/100).
    // Integer percents take the exact integer path.
    std::uint64_t rank;
    double int_part;
    if (std::modf(percent, &int_part) == 0.0) {
        const auto p = static_cast<std::uint64_t>(int_part);
        rank = (p * n + 99) / 100;
    } else {
        rank = static_cast<std::uint64_t>(std::ceil(percent * static_cast<double>(n) / 100.0));
    }
    if (rank == 0) {
        rank = 1;
    }
    const auto& counts = cdf.cum_counts();
    const auto it = std::lower_bound(counts.begin(), counts.end(), rank);
    return cdf.values()[static_cast<std::size_t>(it - counts.begin())];
}

double ks_statistic(const EmpiricalCdf& a, const EmpiricalCdf& b) {
    const auto& va = a.values();
    const auto& vb = b.values();
    const std::uint64_t na = a.sample_count();
    const std::uint64_t nb = b.sample_count();
    if (na == 0 || nb == 0) {
        throw ValidationError("ks_statistic: empty cdf");
    }

    std::size_t i = 0;
    std::size_t j = 0;
    std::uint64_t ca = 0;  // cumulative count of a at the current breakpoint
    std::uint64_t cb = 0;
    std::uint64_t best = 0;
    while (i < va.size() || j < vb.size()) {
        double x;
        if (i < va.size() && (j == vb.size() || va[i] <= vb[j])) {
            x = va[i];
        } else {
            x = vb[j];
        }
        if (i < va.size() && va[i] == x) {
            ca = a.cum_counts()[i];
            ++i;
        }
        if (j < vb.size() && vb[j] == x) {
            cb = b.cum_counts()[j];
            ++j;
        }
        const std::uint64_t lhs = ca * nb;
        const std::uint64_t rhs = cb * na;
        best = std::max(best, lhs > rhs ? lhs - rhs : rhs - lhs);
    }
    return static_cast<double>(best) / (static_cast<double>(na) * static_cast<double>(nb));
}

double ks_series_q(double lambda) {
    if (lambda <= 0.0) {
        return 1.0;
    }
    // Below 0.2 the exact value differs from 1 by under 1e-15 (the dual
    // theta-series form decays like exp(-pi^2/(8 lambda^2))), but the
    // alternating series needs ~1/lambda terms to notice. Answer directly.
    if (lambda < 0.2) {
        return 1.0;
    }
    constexpr double kTermFloor = 1e-12;
    constexpr int kMaxTerms = 100000;
    double sum = 0.0;
    double sign = 1.0;
    for (int k = 1; k <= kMaxTerms; ++k) {
        const double kd = static_cast<double>(k);
        const double term = 2.0 * std::exp(-2.0 * kd * kd * lambda * lambda);
        sum += sign * term;
        sign = -sign;
        if (term < kTermFloor) {
            break;
        }
    }
    if (sum < 0.0) {
        return 0.0;
    }
    // The truncated series cannot resolve values closer to 1 than its own
    // truncation error; snapping that band keeps Q non-increasing in lambda.
    if (sum > 1.0 - 4e-12) {
        return 1.0;
    }
    return sum;
}

double ks_pvalue(double d, std::uint64_t n1, std::uint64_t n2) {
    if (d <= 0.0) {
        return 1.0;
    }
    const double ne = static_cast<double>(n1) * static_cast<double>(n2) /
                      (static_cast<double>(n1) + static_cast<double>(n2));
    const double root = std::sqrt(ne);
    const double lambda = (root + 0.12 + 0.11 / root) * d;
    return ks_series_q(lambda);
}

KsResult ks_test(const EmpiricalCdf& a, const EmpiricalCdf& b) {
    KsResult r;
    r.n1 = a.sample_count();
    r.n2 = b.sample_count();
    r.d = ks_statistic(a, b);
    r.p_value = ks_pvalue(r.d, r.n1, r.n2);
    return r;
}

double range_distance(const EmpiricalCdf& a, const EmpiricalCdf& b,
                      int lo, int hi, int step) {
    if (lo < 1 || hi > 99 || lo >= hi) {
        throw ValidationError("range_distance: need 1 <= lo < hi <= 99");
    }
    if (step < 1) {
        throw ValidationError("range_distance: step must be >= 1");
    }
    double sum = 0.0;
    int count = 0;
    for (int p = lo; p <= hi; p += step) {
        sum += std::abs(quantile(a, p) - quantile(b, p));
        ++count;
    }
    return sum / static_cast<double>(count);
}

}  // namespace ndd
