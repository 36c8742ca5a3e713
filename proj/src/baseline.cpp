#include "ndd/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "ndd/error.hpp"
#include "ndd/util.hpp"

namespace ndd {

namespace {

void validate_metric(const MetricKey& m) {
    if (m.kpi == Kpi::speed_adherence) {
        if (!m.posted_limit_mph) {
            throw ValidationError("speed metric requires a posted limit");
        }
        if (!std::isfinite(*m.posted_limit_mph) || *m.posted_limit_mph <= 0.0) {
            throw ValidationError("speed metric posted limit must be positive");
        }
    } else if (m.posted_limit_mph) {
        throw ValidationError("deceleration metric takes no posted limit");
    }
}

void validate_tau(double tau, const std::string& name) {
    if (!std::isfinite(tau) || tau <= 0.0 || tau > 1.0) {
        throw ValidationError(name + " must be in (0, 1], got " + fmt_double(tau));
    }
}

// List fields are ;-separated and exclusion rows are ,-separated, so ids
// must not contain either separator (or newlines).
void check_id_serializable(const std::string& id, const std::string& what) {
    if (id.empty() || id.find_first_of(";,\n\r") != std::string::npos) {
        throw ValidationError(what + " id not serializable: '" + id + "'");
    }
}

std::string join_ids(const std::vector<std::string>& ids) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ';';
        out += ids[i];
    }
    return out;
}

std::vector<std::string> split_ids(const std::string& text) {
    std::vector<std::string> out;
    if (text.empty()) return out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = text.find(';', start);
        if (pos == std::string::npos) {
            out.push_back(text.substr(start));
            break;
        }
        out.push_back(text.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

// Artifact reader that skips comment and blank lines.
class LineReader {
public:
    explicit LineReader(std::istream& in) : in_(in) {}

    bool next(std::string& line) {
        while (std::getline(in_, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line[0] == '#') continue;
            return true;
        }
        return false;
    }

private:
    std::istream& in_;
};

std::string expect_kv(LineReader& reader, const std::string& key) {
    std::string line;
    if (!reader.next(line)) {
        throw ValidationError("baseline artifact truncated: expected '" + key +
                              "'");
    }
    std::string prefix = key + "=";
    if (line.rfind(prefix, 0) != 0) {
        throw ValidationError("baseline artifact: expected '" + key +
                              "=...', got '" + line + "'");
    }
    return line.substr(prefix.size());
}

}  // namespace

MetricKey speed_metric(double posted_limit_mph) {
    MetricKey m{Kpi::speed_adherence, posted_limit_mph};
    validate_metric(m);
    return m;
}

MetricKey decel_metric() { return MetricKey{Kpi::stop_deceleration, {}}; }

std::string to_string(const MetricKey& m) {
    validate_metric(m);
    if (m.kpi == Kpi::speed_adherence) {
        return "speed:" + fmt_double(*m.posted_limit_mph);
    }
    return "decel";
}

MetricKey parse_metric_key(const std::string& text) {
    if (text == "decel") return decel_metric();
    if (text.rfind("speed:", 0) == 0) {
        return speed_metric(require_double(text.substr(6), "metric limit"));
    }
    throw ValidationError("unknown metric '" + text +
                          "' (expected 'speed:<limit>' or 'decel')");
}

std::string to_string(AnomalyLevel level) {
    return level == AnomalyLevel::segment ? "segment" : "participant";
}

AnomalyLevel parse_anomaly_level(const std::string& text) {
    if (text == "segment") return AnomalyLevel::segment;
    if (text == "participant") return AnomalyLevel::participant;
    throw ValidationError("unknown anomaly level '" + text + "'");
}

std::map<std::string, EmpiricalCdf> group_cdfs(
    std::span<const GroupSample> samples) {
    std::map<std::string, std::vector<double>> by_group;
    for (const auto& [group_id, value] : samples) {
        by_group[group_id].push_back(value);
    }
    std::map<std::string, EmpiricalCdf> out;
    for (const auto& [group_id, values] : by_group) {
        out.emplace(group_id, build_cdf(values));
    }
    return out;
}

AnomalyReport detect_anomalies(const std::map<std::string, EmpiricalCdf>& cdfs,
                               std::span<const GroupSample> samples,
                               double tau, int max_iter, AnomalyLevel level) {
    validate_tau(tau, "tau");
    if (max_iter < 1) {
        throw ValidationError("max_iter must be >= 1");
    }
    if (cdfs.size() < 2) {
        throw ValidationError("anomaly detection needs at least 2 groups, got " +
                              std::to_string(cdfs.size()));
    }

    std::map<std::string, std::vector<double>> by_group;
    for (const auto& [group_id, value] : samples) {
        by_group[group_id].push_back(value);
    }
    if (by_group.size() != cdfs.size()) {
        throw ValidationError("cdfs and samples disagree on the group set");
    }
    for (const auto& [group_id, cdf] : cdfs) {
        auto it = by_group.find(group_id);
        if (it == by_group.end()) {
            throw ValidationError("cdf for unknown group '" + group_id + "'");
        }
        if (cdf.sample_count() != it->second.size()) {
            throw ValidationError("cdf sample count mismatch for group '" +
                                  group_id + "'");
        }
    }

    AnomalyReport report;
    // std::set iterates in sorted order, and the strict > below keeps the
    // first of equal distances, so ties resolve to the smallest group_id.
    std::set<std::string> survivors;
    for (const auto& [group_id, cdf] : cdfs) survivors.insert(group_id);

    for (int iter = 1; iter <= max_iter && survivors.size() >= 2; ++iter) {
        std::string worst_id;
        double worst_d = -1.0;
        for (const std::string& g : survivors) {
            std::vector<double> pooled;
            for (const std::string& h : survivors) {
                if (h == g) continue;
                const auto& vals = by_group.at(h);
                pooled.insert(pooled.end(), vals.begin(), vals.end());
            }
            double d = ks_statistic(cdfs.at(g), build_cdf(pooled));
            if (d > worst_d) {
                worst_d = d;
                worst_id = g;
            }
        }
        if (!(worst_d > tau)) break;
        report.flagged.push_back(AnomalyFlag{worst_id, level, worst_d, iter});
        survivors.erase(worst_id);
    }
    return report;
}

BaselineCurve build_baseline(std::span<const TaggedSample> samples,
                             const MetricKey& metric, Cohort cohort,
                             double tau_segment, double tau_participant,
                             int max_iter) {
    validate_metric(metric);
    validate_tau(tau_segment, "tau_segment");
    validate_tau(tau_participant, "tau_participant");
    if (max_iter < 1) {
        throw ValidationError("max_iter must be >= 1");
    }
    if (samples.empty()) {
        throw ValidationError("empty baseline: no samples");
    }
    for (const auto& s : samples) {
        if (s.segment_id.empty() || s.participant_id.empty()) {
            throw ValidationError("baseline samples need segment and "
                                  "participant ids");
        }
    }

    BaselineCurve curve;
    curve.metric = metric;
    curve.cohort = cohort;
    curve.tau_segment = tau_segment;
    curve.tau_participant = tau_participant;

    // Pass 1: segment-level anomalies.
    std::vector<GroupSample> seg_samples;
    seg_samples.reserve(samples.size());
    for (const auto& s : samples) seg_samples.emplace_back(s.segment_id, s.value);
    auto seg_cdfs = group_cdfs(seg_samples);

    std::set<std::string> bad_segments;
    if (seg_cdfs.size() >= 2) {
        AnomalyReport rep = detect_anomalies(seg_cdfs, seg_samples, tau_segment,
                                             max_iter, AnomalyLevel::segment);
        for (auto& f : rep.flagged) {
            bad_segments.insert(f.group_id);
            curve.exclusions.flagged.push_back(std::move(f));
        }
    }

    std::vector<TaggedSample> stage1;
    stage1.reserve(samples.size());
    for (const auto& s : samples) {
        if (!bad_segments.count(s.segment_id)) stage1.push_back(s);
    }
    if (stage1.empty()) {
        throw ValidationError("empty baseline: every segment was flagged");
    }

    // Pass 2: participant-level anomalies on the survivors.
    std::vector<GroupSample> part_samples;
    part_samples.reserve(stage1.size());
    for (const auto& s : stage1) {
        part_samples.emplace_back(s.participant_id, s.value);
    }
    auto part_cdfs = group_cdfs(part_samples);

    std::set<std::string> bad_participants;
    if (part_cdfs.size() >= 2) {
        AnomalyReport rep =
            detect_anomalies(part_cdfs, part_samples, tau_participant, max_iter,
                             AnomalyLevel::participant);
        for (auto& f : rep.flagged) {
            bad_participants.insert(f.group_id);
            curve.exclusions.flagged.push_back(std::move(f));
        }
    }

    std::vector<TaggedSample> kept;
    kept.reserve(stage1.size());
    for (const auto& s : stage1) {
        if (!bad_participants.count(s.participant_id)) kept.push_back(s);
    }
    if (kept.empty()) {
        throw ValidationError("empty baseline: every participant was flagged");
    }

    std::set<std::string> seg_ids, part_ids;
    std::vector<double> pooled;
    pooled.reserve(kept.size());
    for (const auto& s : kept) {
        seg_ids.insert(s.segment_id);
        part_ids.insert(s.participant_id);
        pooled.push_back(s.value);
    }
    curve.cdf = build_cdf(pooled);
    curve.segment_ids.assign(seg_ids.begin(), seg_ids.end());
    curve.participant_ids.assign(part_ids.begin(), part_ids.end());

    // Diagnostic: the survivors should agree with each other. If any two
    // surviving groups at either level still differ by more than that
    // level's tau, no single pooled curve represents the cohort.
    auto pairwise_exceeds = [&kept](AnomalyLevel level, double tau) {
        std::vector<GroupSample> gs;
        gs.reserve(kept.size());
        for (const auto& s : kept) {
            gs.emplace_back(level == AnomalyLevel::segment ? s.segment_id
                                                           : s.participant_id,
                            s.value);
        }
        auto cdfs = group_cdfs(gs);
        for (auto a = cdfs.begin(); a != cdfs.end(); ++a) {
            for (auto b = std::next(a); b != cdfs.end(); ++b) {
                if (ks_statistic(a->second, b->second) > tau) return true;
            }
        }
        return false;
    };
    curve.non_identifiable =
        pairwise_exceeds(AnomalyLevel::segment, tau_segment) ||
        pairwise_exceeds(AnomalyLevel::participant, tau_participant);

    return curve;
}

BaselineComparison compare_baselines(const BaselineCurve& a,
                                     const BaselineCurve& b, double alpha) {
    if (!(a.metric == b.metric)) {
        throw ValidationError("cannot compare baselines of different metrics (" +
                              to_string(a.metric) + " vs " + to_string(b.metric) +
                              ")");
    }
    if (!std::isfinite(alpha) || alpha <= 0.0 || alpha >= 1.0) {
        throw ValidationError("alpha must be in (0, 1)");
    }
    BaselineComparison cmp;
    cmp.ks = ks_test(a.cdf, b.cdf);
    cmp.alpha = alpha;
    cmp.significant = cmp.ks.p_value < alpha;
    return cmp;
}

void write_baseline(std::ostream& out, const BaselineCurve& curve) {
    validate_metric(curve.metric);
    validate_tau(curve.tau_segment, "tau_segment");
    validate_tau(curve.tau_participant, "tau_participant");
    if (curve.cdf.sample_count() == 0) {
        throw ValidationError("cannot serialize an empty baseline");
    }
    for (const auto& id : curve.segment_ids) check_id_serializable(id, "segment");
    for (const auto& id : curve.participant_ids) {
        check_id_serializable(id, "participant");
    }
    for (const auto& f : curve.exclusions.flagged) {
        check_id_serializable(f.group_id, "excluded group");
    }

    out << "drivebaseline.baseline.v1\n";
    out << "metric=" << to_string(curve.metric) << '\n';
    out << "cohort=" << to_string(curve.cohort) << '\n';
    out << "tau_segment=" << fmt_double(curve.tau_segment) << '\n';
    out << "tau_participant=" << fmt_double(curve.tau_participant) << '\n';
    out << "non_identifiable=" << (curve.non_identifiable ? '1' : '0') << '\n';
    out << "segments=" << join_ids(curve.segment_ids) << '\n';
    out << "participants=" << join_ids(curve.participant_ids) << '\n';
    out << "excluded_count=" << curve.exclusions.flagged.size() << '\n';
    for (const auto& f : curve.exclusions.flagged) {
        out << "excluded=" << to_string(f.level) << ',' << f.group_id << ','
            << fmt_double(f.ks_distance) << ',' << f.iteration << '\n';
    }
    out << "n=" << curve.cdf.sample_count() << '\n';
    out << "steps=" << curve.cdf.values().size() << '\n';
    out << "value,cum_count\n";
    for (std::size_t i = 0; i < curve.cdf.values().size(); ++i) {
        out << fmt_double(curve.cdf.values()[i]) << ','
            << curve.cdf.cum_counts()[i] << '\n';
    }
    if (!out) {
        throw IoError("failed writing baseline artifact");
    }
}

BaselineCurve read_baseline(std::istream& in) {
    if (!in.good()) {
        throw IoError("cannot read baseline artifact");
    }
    LineReader reader(in);
    std::string line;
    if (!reader.next(line) || line != "drivebaseline.baseline.v1") {
        throw ValidationError("not a baseline artifact (bad magic line)");
    }

    BaselineCurve curve;
    curve.metric = parse_metric_key(expect_kv(reader, "metric"));
    std::string cohort_text = expect_kv(reader, "cohort");
    auto cohort = parse_cohort(cohort_text);
    if (!cohort) {
        throw ValidationError("unknown cohort '" + cohort_text + "'");
    }
    curve.cohort = *cohort;
    curve.tau_segment =
        require_double(expect_kv(reader, "tau_segment"), "tau_segment");
    curve.tau_participant =
        require_double(expect_kv(reader, "tau_participant"), "tau_participant");
    std::string ni = expect_kv(reader, "non_identifiable");
    if (ni != "0" && ni != "1") {
        throw ValidationError("non_identifiable must be 0 or 1, got '" + ni +
                              "'");
    }
    curve.non_identifiable = ni == "1";
    curve.segment_ids = split_ids(expect_kv(reader, "segments"));
    curve.participant_ids = split_ids(expect_kv(reader, "participants"));

    std::uint64_t excluded_count =
        require_u64(expect_kv(reader, "excluded_count"), "excluded_count");
    for (std::uint64_t i = 0; i < excluded_count; ++i) {
        std::string row = expect_kv(reader, "excluded");
        std::vector<std::string> cells = split_csv(row);
        if (cells.size() != 4) {
            throw ValidationError("malformed exclusion row '" + row + "'");
        }
        AnomalyFlag f;
        f.level = parse_anomaly_level(cells[0]);
        f.group_id = cells[1];
        f.ks_distance = require_double(cells[2], "exclusion ks");
        f.iteration =
            static_cast<int>(require_i64(cells[3], "exclusion iteration"));
        curve.exclusions.flagged.push_back(std::move(f));
    }

    std::uint64_t n = require_u64(expect_kv(reader, "n"), "n");
    std::uint64_t steps = require_u64(expect_kv(reader, "steps"), "steps");
    if (steps == 0 || steps > n) {
        throw ValidationError("baseline artifact: invalid step count");
    }
    if (!reader.next(line) || line != "value,cum_count") {
        throw ValidationError("baseline artifact: expected 'value,cum_count'");
    }

    std::vector<double> values;
    std::vector<std::uint64_t> counts;
    values.reserve(steps);
    counts.reserve(steps);
    for (std::uint64_t i = 0; i < steps; ++i) {
        if (!reader.next(line)) {
            throw ValidationError("baseline artifact truncated in cdf steps");
        }
        std::vector<std::string> cells = split_csv(line);
        if (cells.size() != 2) {
            throw ValidationError("malformed cdf step '" + line + "'");
        }
        values.push_back(require_double(cells[0], "cdf value"));
        counts.push_back(require_u64(cells[1], "cdf cum_count"));
    }
    curve.cdf = EmpiricalCdf(std::move(values), std::move(counts));
    if (curve.cdf.sample_count() != n) {
        throw ValidationError("baseline artifact: n does not match cdf steps");
    }
    if (reader.next(line)) {
        throw ValidationError("baseline artifact: unexpected trailing content");
    }
    return curve;
}

std::string baseline_to_string(const BaselineCurve& curve) {
    std::ostringstream out;
    write_baseline(out, curve);
    return out.str();
}

}  // namespace ndd
