#pragma once

#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ndd/stats.hpp"
#include "ndd/telemetry.hpp"

namespace ndd {

enum class Kpi { speed_adherence, stop_deceleration };

// Identifies which KPI a curve measures. Speed adherence is always relative
// to a posted limit; deceleration is not.
struct MetricKey {
    Kpi kpi = Kpi::speed_adherence;
    std::optional<double> posted_limit_mph;

    bool operator==(const MetricKey&) const = default;
};

MetricKey speed_metric(double posted_limit_mph);
MetricKey decel_metric();

// "speed:75" / "decel" and back.
std::string to_string(const MetricKey& m);
MetricKey parse_metric_key(const std::string& text);

enum class AnomalyLevel { segment, participant };

std::string to_string(AnomalyLevel level);
AnomalyLevel parse_anomaly_level(const std::string& text);

struct AnomalyFlag {
    std::string group_id;
    AnomalyLevel level = AnomalyLevel::segment;
    double ks_distance = 0.0;
    int iteration = 0;  // 1-based greedy iteration that flagged the group
};

struct AnomalyReport {
    std::vector<AnomalyFlag> flagged;
};

// (group_id, value) pairs, one group per distinct id.
using GroupSample = std::pair<std::string, double>;

std::map<std::string, EmpiricalCdf> group_cdfs(
    std::span<const GroupSample> samples);

// Greedy leave-one-out anomaly removal. Each iteration computes, for every
// surviving group, the KS distance between its cdf and the pooled cdf of all
// other survivors' samples; the worst group is flagged if its distance
// exceeds tau (ties go to the lexicographically smallest group_id). Stops
// when nothing exceeds tau, when fewer than two groups survive, or after
// max_iter iterations. `cdfs` must be exactly the per-group cdfs of
// `samples` (as from group_cdfs).
AnomalyReport detect_anomalies(const std::map<std::string, EmpiricalCdf>& cdfs,
                               std::span<const GroupSample> samples,
                               double tau, int max_iter, AnomalyLevel level);

// One KPI observation with full provenance.
struct TaggedSample {
    std::string segment_id;
    std::string participant_id;
    double value = 0.0;
};

struct BaselineCurve {
    MetricKey metric;
    Cohort cohort = Cohort::senior;
    EmpiricalCdf cdf;
    std::vector<std::string> segment_ids;      // contributing, sorted
    std::vector<std::string> participant_ids;  // contributing, sorted
    AnomalyReport exclusions;                  // segment flags then participant flags
    double tau_segment = 0.0;
    double tau_participant = 0.0;
    // Set when the surviving groups still disagree beyond tau pairwise, i.e.
    // no single curve credibly represents the cohort on this metric.
    bool non_identifiable = false;
};

// Two-pass pipeline: segment-level anomaly removal, then participant-level
// removal on the survivors, then pool everything left into one cdf. A level
// with fewer than two groups skips its detection pass. Throws an
// "empty baseline" error when nothing survives.
BaselineCurve build_baseline(std::span<const TaggedSample> samples,
                             const MetricKey& metric, Cohort cohort,
                             double tau_segment, double tau_participant,
                             int max_iter = 10);

struct BaselineComparison {
    KsResult ks;
    double alpha = 0.05;
    bool significant = false;  // ks.p_value < alpha
};

// KS test between two cohort baselines of the same metric.
BaselineComparison compare_baselines(const BaselineCurve& a,
                                     const BaselineCurve& b,
                                     double alpha = 0.05);

// Versioned text artifact. write_baseline(read_baseline(text)) reproduces
// text byte for byte; doubles are written in shortest round-trip form.
void write_baseline(std::ostream& out, const BaselineCurve& curve);
BaselineCurve read_baseline(std::istream& in);

std::string baseline_to_string(const BaselineCurve& curve);

}  // namespace ndd
