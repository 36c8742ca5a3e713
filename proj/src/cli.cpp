#include "ndd/cli.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "ndd/baseline.hpp"
#include "ndd/classify.hpp"
#include "ndd/config.hpp"
#include "ndd/error.hpp"
#include "ndd/geo.hpp"
#include "ndd/stats.hpp"
#include "ndd/synthgen.hpp"
#include "ndd/telemetry.hpp"
#include "ndd/util.hpp"

namespace fs = std::filesystem;

namespace ndd {

namespace {

void print_usage(std::ostream& os) {
    os << "usage: drivebaseline <subcommand> [flags]\n"
          "\n"
          "subcommands:\n"
          "  ingest          parse, clean, and filter drive telemetry\n"
          "  extract-stops   cut stop-approach traces and deceleration events\n"
          "  baseline        build a cohort baseline curve for one metric\n"
          "  kstest          compare two baseline curves\n"
          "  optimize-range  search the percentile range separating cohorts\n"
          "  classify        classify held-out participants\n"
          "  synth           generate seeded synthetic cohorts\n"
          "  report          emit plot-data files from pipeline artifacts\n"
          "\n"
          "common flags:\n"
          "  --config PATH   key=value pipeline config\n"
          "                  (env DRIVEBASELINE_CONFIG overrides the flag)\n"
          "  --out-dir PATH  output directory, created and locked for the run\n";
}

struct Flags {
    std::map<std::string, std::string> values;
    std::set<std::string> switches;
};

Flags parse_flags(const std::vector<std::string>& args,
                  const std::set<std::string>& value_flags,
                  const std::set<std::string>& switch_flags) {
    Flags flags;
    for (std::size_t i = 1; i < args.size(); ++i) {
        const std::string& arg = args[i];
        if (switch_flags.count(arg)) {
            flags.switches.insert(arg);
            continue;
        }
        if (value_flags.count(arg)) {
            if (i + 1 >= args.size()) {
                throw ValidationError("flag " + arg + " needs a value");
            }
            if (!flags.values.emplace(arg, args[i + 1]).second) {
                throw ValidationError("duplicate flag " + arg);
            }
            ++i;
            continue;
        }
        throw ValidationError("unknown flag '" + arg + "'");
    }
    return flags;
}

std::string need(const Flags& flags, const std::string& name) {
    auto it = flags.values.find(name);
    if (it == flags.values.end()) {
        throw ValidationError("missing required flag " + name);
    }
    return it->second;
}

std::optional<std::string> get(const Flags& flags, const std::string& name) {
    auto it = flags.values.find(name);
    if (it == flags.values.end()) return std::nullopt;
    return it->second;
}

PipelineConfig load_pipeline_config(const Flags& flags) {
    std::string path;
    if (const char* env = std::getenv("DRIVEBASELINE_CONFIG")) {
        path = env;
    } else if (auto p = get(flags, "--config")) {
        path = *p;
    }
    if (path.empty()) return PipelineConfig{};
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open config '" + path + "'");
    }
    return load_config(in);
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path + "'");
    }
    return in;
}

// One writer per output directory at a time.
class DirLock {
public:
    explicit DirLock(const fs::path& dir) : lock_(dir / ".lock") {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) {
            throw IoError("cannot create output directory '" + dir.string() +
                          "'");
        }
        int fd = ::open(lock_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd < 0) {
            if (errno == EEXIST) {
                throw ValidationError("output directory '" + dir.string() +
                                      "' is locked (.lock present)");
            }
            throw IoError("cannot create lock file in '" + dir.string() + "'");
        }
        ::close(fd);
        held_ = true;
    }

    ~DirLock() {
        if (held_) {
            std::error_code ec;
            fs::remove(lock_, ec);
        }
    }

    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    fs::path lock_;
    bool held_ = false;
};

// All outputs land via temp file + rename, so a failed run never leaves a
// half-written artifact under its final name.
void atomic_write(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot write '" + tmp.string() + "'");
        }
        out << content;
        out.flush();
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw IoError("failed writing '" + tmp.string() + "'");
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        std::error_code ec2;
        fs::remove(tmp, ec2);
        throw IoError("cannot move '" + tmp.string() + "' into place");
    }
}

DriveFormat parse_format(const Flags& flags) {
    auto f = get(flags, "--format");
    if (!f || *f == "csv") return DriveFormat::csv;
    if (*f == "jsonl") return DriveFormat::jsonl;
    throw ValidationError("unknown --format '" + *f +
                          "' (expected csv or jsonl)");
}

Cohort need_cohort(const Flags& flags) {
    std::string text = need(flags, "--cohort");
    auto cohort = parse_cohort(text);
    if (!cohort) {
        throw ValidationError("unknown cohort '" + text +
                              "' (expected senior or young)");
    }
    return *cohort;
}

std::vector<DrivePoint> load_clean_points(const std::string& path,
                                          DriveFormat format,
                                          std::ostream& err) {
    auto in = open_input(path);
    ParsedDrive parsed = parse_drive_records(in, format);
    if (!parsed.issues.empty()) {
        err << "warning: " << parsed.issues.size()
            << " malformed rows skipped in " << path << '\n';
    }
    return clean(parsed.points).points;
}

Roster load_roster(const std::string& path, int senior_age_threshold,
                   std::ostream& err) {
    auto in = open_input(path);
    RosterParse parsed = parse_roster(in, senior_age_threshold);
    if (!parsed.issues.empty()) {
        err << "warning: " << parsed.issues.size()
            << " malformed rows skipped in " << path << '\n';
    }
    return parsed.participants;
}

const Participant& roster_get(const Roster& roster, const std::string& pid) {
    auto it = roster.find(pid);
    if (it == roster.end()) {
        throw ValidationError("participant '" + pid + "' not in roster");
    }
    return it->second;
}

// decel_events.csv row, as written by extract-stops.
struct EventRow {
    std::string participant_id;
    std::string intersection_id;
    std::int64_t t_start = 0;
    double dt = 0.0;
    double v1 = 0.0;
    double v2 = 0.0;
    double a = 0.0;
};

constexpr const char* kEventsHeader =
    "participant_id,intersection_id,t_start,dt,v1_ftps,v2_ftps,a_ftps2";

std::vector<EventRow> read_events_csv(std::istream& in) {
    if (!in.good()) {
        throw IoError("cannot read deceleration events");
    }
    std::vector<EventRow> rows;
    std::string line;
    bool saw_header = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (!saw_header) {
            if (line != kEventsHeader) {
                throw ValidationError(
                    "deceleration events: unexpected header '" + line + "'");
            }
            saw_header = true;
            continue;
        }
        std::vector<std::string> cells = split_csv(line);
        if (cells.size() != 7) {
            throw ValidationError("deceleration events line " +
                                  std::to_string(line_no) + ": expected 7 "
                                  "columns, got " +
                                  std::to_string(cells.size()));
        }
        const std::string where =
            "deceleration events line " + std::to_string(line_no);
        EventRow row;
        row.participant_id = cells[0];
        row.intersection_id = cells[1];
        row.t_start = require_i64(cells[2], where + " t_start");
        row.dt = require_double(cells[3], where + " dt");
        row.v1 = require_double(cells[4], where + " v1_ftps");
        row.v2 = require_double(cells[5], where + " v2_ftps");
        row.a = require_double(cells[6], where + " a_ftps2");
        rows.push_back(std::move(row));
    }
    if (!saw_header) {
        throw ValidationError("deceleration events: missing header");
    }
    return rows;
}

// KPI sample extraction. Speed adherence takes every point whose posted
// limit equals the metric's; deceleration takes |a| per event with the
// intersection standing in as the segment-level group.
std::vector<TaggedSample> speed_samples(std::span<const DrivePoint> points,
                                        double limit) {
    std::vector<TaggedSample> out;
    for (const auto& p : points) {
        if (p.speed_mph && p.posted_limit_mph && *p.posted_limit_mph == limit) {
            out.push_back(TaggedSample{p.segment_id, p.participant_id,
                                       *p.speed_mph});
        }
    }
    return out;
}

std::vector<TaggedSample> decel_samples(std::span<const EventRow> events) {
    std::vector<TaggedSample> out;
    for (const auto& e : events) {
        out.push_back(TaggedSample{"stop:" + e.intersection_id,
                                   e.participant_id, std::abs(e.a)});
    }
    return out;
}

// Loads the KPI samples named by the metric: --points for speed adherence,
// --events for deceleration.
std::vector<TaggedSample> load_metric_samples(const Flags& flags,
                                              const MetricKey& metric,
                                              std::ostream& err) {
    if (metric.kpi == Kpi::speed_adherence) {
        std::string path = need(flags, "--points");
        auto points = load_clean_points(path, parse_format(flags), err);
        return speed_samples(points, *metric.posted_limit_mph);
    }
    std::string path = need(flags, "--events");
    auto in = open_input(path);
    return decel_samples(read_events_csv(in));
}

std::map<std::string, EmpiricalCdf> participant_cdfs(
    std::span<const TaggedSample> samples) {
    std::map<std::string, std::vector<double>> by_pid;
    for (const auto& s : samples) by_pid[s.participant_id].push_back(s.value);
    std::map<std::string, EmpiricalCdf> out;
    for (const auto& [pid, values] : by_pid) out.emplace(pid, build_cdf(values));
    return out;
}

std::string metric_slug(const MetricKey& metric) {
    std::string s = to_string(metric);
    s.erase(std::remove(s.begin(), s.end(), ':'), s.end());
    return s;
}

constexpr const char* kRangeHeader = "lo,hi,step,objective";

PercentileRange read_range_csv(std::istream& in) {
    if (!in.good()) {
        throw IoError("cannot read range file");
    }
    std::string line;
    bool saw_header = false;
    std::optional<PercentileRange> range;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (!saw_header) {
            if (line != kRangeHeader) {
                throw ValidationError("range file: unexpected header '" + line +
                                      "'");
            }
            saw_header = true;
            continue;
        }
        if (range) {
            throw ValidationError("range file: more than one data row");
        }
        std::vector<std::string> cells = split_csv(line);
        if (cells.size() != 4) {
            throw ValidationError("range file: malformed row '" + line + "'");
        }
        PercentileRange r;
        r.lo = static_cast<int>(require_i64(cells[0], "range lo"));
        r.hi = static_cast<int>(require_i64(cells[1], "range hi"));
        r.step = static_cast<int>(require_i64(cells[2], "range step"));
        r.objective = require_double(cells[3], "range objective");
        range = r;
    }
    if (!range) {
        throw ValidationError("range file: missing data row");
    }
    validate_range(*range);
    return *range;
}

int cmd_ingest(const std::vector<std::string>& args, std::ostream& out,
               std::ostream& err) {
    Flags flags = parse_flags(
        args, {"--config", "--out-dir", "--drive", "--roster", "--format"}, {});
    PipelineConfig cfg = load_pipeline_config(flags);

    auto drive_in = open_input(need(flags, "--drive"));
    ParsedDrive parsed = parse_drive_records(drive_in, parse_format(flags));
    Roster roster =
        load_roster(need(flags, "--roster"), cfg.senior_age_threshold, err);

    CleanResult cleaned = clean(parsed.points);
    FilterResult filtered = filter_select(
        cleaned.points, cfg.min_posted_limit_mph, RoadClass::interstate,
        static_cast<std::uint64_t>(cfg.min_points_per_segment),
        static_cast<std::uint64_t>(cfg.min_participants_per_segment), &roster);

    std::string echo = config_echo(cfg);

    std::string segments = echo;
    segments +=
        "segment_id,posted_limit_mph,n_points,n_participants,"
        "n_senior_points,n_young_points,n_senior_participants,"
        "n_young_participants\n";
    for (const auto& s : filtered.summaries) {
        segments += s.segment_id;
        segments += ',';
        segments += fmt_double(s.posted_limit_mph);
        segments += ',';
        segments += std::to_string(s.n_points);
        segments += ',';
        segments += std::to_string(s.n_participants);
        segments += ',';
        segments += std::to_string(s.n_senior_points);
        segments += ',';
        segments += std::to_string(s.n_young_points);
        segments += ',';
        segments += std::to_string(s.n_senior_participants);
        segments += ',';
        segments += std::to_string(s.n_young_participants);
        segments += '\n';
    }

    std::string report = echo;
    auto add = [&report](const std::string& key, std::uint64_t value) {
        report += key;
        report += '=';
        report += std::to_string(value);
        report += '\n';
    };
    add("rows_in", cleaned.report.rows_in);
    add("parse_issues", parsed.issues.size());
    add("rows_dropped_missing", cleaned.report.rows_dropped_missing);
    for (const auto& [reason, count] : cleaned.report.dropped_by_reason) {
        add("dropped_" + reason, count);
    }
    add("rows_dropped_filter", filtered.rows_dropped());
    for (const auto& [reason, count] : filtered.dropped_by_reason) {
        add("dropped_" + reason, count);
    }
    add("rows_out", filtered.points.size());

    fs::path out_dir = need(flags, "--out-dir");
    DirLock lock(out_dir);
    atomic_write(out_dir / "points.csv", echo + drive_csv(filtered.points));
    atomic_write(out_dir / "segments.csv", segments);
    atomic_write(out_dir / "clean_report.txt", report);

    out << "ingest: " << cleaned.report.rows_in << " rows in, "
        << filtered.points.size() << " rows out, "
        << filtered.summaries.size() << " segments retained\n";
    return 0;
}

int cmd_extract_stops(const std::vector<std::string>& args, std::ostream& out,
                      std::ostream& err) {
    Flags flags = parse_flags(
        args, {"--config", "--out-dir", "--drive", "--stops", "--format"}, {});
    PipelineConfig cfg = load_pipeline_config(flags);

    auto points =
        load_clean_points(need(flags, "--drive"), parse_format(flags), err);
    auto trips = assemble_trips(points);

    auto stops_in = open_input(need(flags, "--stops"));
    auto stops = load_stop_intersections(stops_in, cfg.buffer_radius_m);

    auto traces = extract_approach_traces(trips, stops, cfg.v_stop_mph);

    std::string echo = config_echo(cfg);

    std::string traces_csv = echo;
    traces_csv += "participant_id,trip_id,intersection_id,n_points,t_start,t_end\n";
    std::string events_csv = echo;
    events_csv += kEventsHeader;
    events_csv += '\n';
    std::size_t n_events = 0;
    for (const auto& tr : traces) {
        traces_csv += tr.participant_id;
        traces_csv += ',';
        traces_csv += tr.trip_id;
        traces_csv += ',';
        traces_csv += tr.intersection_id;
        traces_csv += ',';
        traces_csv += std::to_string(tr.points.size());
        traces_csv += ',';
        traces_csv += std::to_string(tr.points.front().t);
        traces_csv += ',';
        traces_csv += std::to_string(tr.points.back().t);
        traces_csv += '\n';
        for (const auto& e : compute_deceleration(tr)) {
            events_csv += e.participant_id;
            events_csv += ',';
            events_csv += e.intersection_id;
            events_csv += ',';
            events_csv += std::to_string(e.t_start);
            events_csv += ',';
            events_csv += fmt_double(e.dt);
            events_csv += ',';
            events_csv += fmt_double(e.v1);
            events_csv += ',';
            events_csv += fmt_double(e.v2);
            events_csv += ',';
            events_csv += fmt_double(e.a);
            events_csv += '\n';
            ++n_events;
        }
    }

    fs::path out_dir = need(flags, "--out-dir");
    DirLock lock(out_dir);
    atomic_write(out_dir / "traces.csv", traces_csv);
    atomic_write(out_dir / "decel_events.csv", events_csv);

    out << "extract-stops: " << traces.size() << " approach traces, "
        << n_events << " deceleration events\n";
    return 0;
}

int cmd_baseline(const std::vector<std::string>& args, std::ostream& out,
                 std::ostream& err) {
    Flags flags = parse_flags(args,
                              {"--config", "--out-dir", "--metric", "--cohort",
                               "--roster", "--points", "--events", "--format"},
                              {"--force"});
    PipelineConfig cfg = load_pipeline_config(flags);

    MetricKey metric = parse_metric_key(need(flags, "--metric"));
    Cohort cohort = need_cohort(flags);
    Roster roster =
        load_roster(need(flags, "--roster"), cfg.senior_age_threshold, err);

    std::vector<TaggedSample> samples = load_metric_samples(flags, metric, err);
    std::erase_if(samples, [&](const TaggedSample& s) {
        return roster_get(roster, s.participant_id).cohort != cohort;
    });
    if (samples.empty()) {
        throw ValidationError("no " + std::string(to_string(cohort)) +
                              " samples for metric " + to_string(metric));
    }

    BaselineCurve curve =
        build_baseline(samples, metric, cohort, cfg.tau_segment,
                       cfg.tau_participant, cfg.max_iter);
    if (curve.non_identifiable && !flags.switches.count("--force")) {
        throw ValidationError(
            "baseline is non-identifiable: surviving groups still differ "
            "beyond tau; pass --force to emit it anyway");
    }

    std::string echo = config_echo(cfg);
    std::string anomalies = echo;
    anomalies += "level,group_id,ks_distance,iteration\n";
    for (const auto& f : curve.exclusions.flagged) {
        anomalies += to_string(f.level);
        anomalies += ',';
        anomalies += f.group_id;
        anomalies += ',';
        anomalies += fmt_double(f.ks_distance);
        anomalies += ',';
        anomalies += std::to_string(f.iteration);
        anomalies += '\n';
    }

    std::string curve_name = std::string(to_string(cohort)) + "_" +
                             metric_slug(metric) + ".curve";

    fs::path out_dir = need(flags, "--out-dir");
    DirLock lock(out_dir);
    atomic_write(out_dir / curve_name, echo + baseline_to_string(curve));
    atomic_write(out_dir / "anomalies.csv", anomalies);

    out << "baseline: " << curve_name << " from " << curve.cdf.sample_count()
        << " samples, " << curve.exclusions.flagged.size()
        << " groups excluded"
        << (curve.non_identifiable ? " (non-identifiable, forced)" : "")
        << '\n';
    return 0;
}

int cmd_kstest(const std::vector<std::string>& args, std::ostream& out,
               std::ostream& /*err*/) {
    Flags flags = parse_flags(
        args, {"--config", "--out-dir", "--baseline-a", "--baseline-b"}, {});
    PipelineConfig cfg = load_pipeline_config(flags);

    auto in_a = open_input(need(flags, "--baseline-a"));
    BaselineCurve a = read_baseline(in_a);
    auto in_b = open_input(need(flags, "--baseline-b"));
    BaselineCurve b = read_baseline(in_b);

    BaselineComparison cmp = compare_baselines(a, b, cfg.alpha);

    std::string ks = config_echo(cfg);
    ks += "metric,cohort_a,cohort_b,n_a,n_b,d,p_value,alpha,significant\n";
    ks += to_string(a.metric);
    ks += ',';
    ks += to_string(a.cohort);
    ks += ',';
    ks += to_string(b.cohort);
    ks += ',';
    ks += std::to_string(cmp.ks.n1);
    ks += ',';
    ks += std::to_string(cmp.ks.n2);
    ks += ',';
    ks += fmt_double(cmp.ks.d);
    ks += ',';
    ks += fmt_double(cmp.ks.p_value);
    ks += ',';
    ks += fmt_double(cmp.alpha);
    ks += ',';
    ks += cmp.significant ? '1' : '0';
    ks += '\n';

    fs::path out_dir = need(flags, "--out-dir");
    DirLock lock(out_dir);
    atomic_write(out_dir / "ks.csv", ks);

    out << "kstest: d=" << fmt_double(cmp.ks.d)
        << " p=" << fmt_double(cmp.ks.p_value)
        << " significant=" << (cmp.significant ? "yes" : "no") << '\n';
    return 0;
}

int cmd_optimize_range(const std::vector<std::string>& args, std::ostream& out,
                       std::ostream& err) {
    Flags flags = parse_flags(args,
                              {"--config", "--out-dir", "--senior", "--young",
                               "--points", "--events", "--format"},
                              {"--no-screen"});
    PipelineConfig cfg = load_pipeline_config(flags);

    auto in_s = open_input(need(flags, "--senior"));
    BaselineCurve senior = read_baseline(in_s);
    auto in_y = open_input(need(flags, "--young"));
    BaselineCurve young = read_baseline(in_y);

    auto samples = load_metric_samples(flags, senior.metric, err);
    auto by_pid = participant_cdfs(samples);
    if (by_pid.empty()) {
        throw ValidationError("no validation participants in the input");
    }

    bool screening =
        cfg.screen_validation && !flags.switches.count("--no-screen");
    std::vector<std::string> screened_out;
    std::vector<EmpiricalCdf> validation;
    if (screening) {
        std::vector<std::pair<std::string, EmpiricalCdf>> named(
            by_pid.begin(), by_pid.end());
        ValidationScreen screen =
            screen_validation(named, senior, cfg.screen_tau);
        for (const auto& f : screen.flagged) screened_out.push_back(f.group_id);
        for (std::size_t idx : screen.kept_indices) {
            validation.push_back(named[idx].second);
        }
        if (validation.empty()) {
            throw ValidationError(
                "every validation participant was screened out at tau " +
                fmt_double(cfg.screen_tau));
        }
    } else {
        for (const auto& [pid, cdf] : by_pid) validation.push_back(cdf);
    }

    PercentileRange range = optimize_percentile_range(
        validation, senior, young, cfg.min_width, cfg.grid_step);

    std::string range_csv = config_echo(cfg);
    if (screening) {
        range_csv += "# screened_out=";
        for (std::size_t i = 0; i < screened_out.size(); ++i) {
            if (i) range_csv += ';';
            range_csv += screened_out[i];
        }
        range_csv += '\n';
    }
    range_csv += kRangeHeader;
    range_csv += '\n';
    range_csv += std::to_string(range.lo);
    range_csv += ',';
    range_csv += std::to_string(range.hi);
    range_csv += ',';
    range_csv += std::to_string(range.step);
    range_csv += ',';
    range_csv += fmt_double(range.objective);
    range_csv += '\n';

    fs::path out_dir = need(flags, "--out-dir");
    DirLock lock(out_dir);
    atomic_write(out_dir / "range.csv", range_csv);

    out << "optimize-range: [" << range.lo << ", " << range.hi << "] step "
        << range.step << " objective " << fmt_double(range.objective) << '\n';
    return 0;
}

int cmd_classify(const std::vector<std::string>& args, std::ostream& out,
                 std::ostream& err) {
    Flags flags = parse_flags(args,
                              {"--config", "--out-dir", "--senior", "--young",
                               "--range", "--roster", "--points", "--events",
                               "--format"},
                              {});
    PipelineConfig cfg = load_pipeline_config(flags);

    auto in_s = open_input(need(flags, "--senior"));
    BaselineCurve senior = read_baseline(in_s);
    auto in_y = open_input(need(flags, "--young"));
    BaselineCurve young = read_baseline(in_y);
    auto in_r = open_input(need(flags, "--range"));
    PercentileRange range = read_range_csv(in_r);
    Roster roster =
        load_roster(need(flags, "--roster"), cfg.senior_age_threshold, err);

    auto samples = load_metric_samples(flags, senior.metric, err);
    auto by_pid = participant_cdfs(samples);
    std::vector<TestCase> cases;
    for (auto& [pid, cdf] : by_pid) {
        cases.push_back(TestCase{pid, std::move(cdf),
                                 roster_get(roster, pid).cohort});
    }
    AccuracyReport report = evaluate_accuracy(cases, senior, young, range);

    std::string echo = config_echo(cfg);
    std::string scatter = echo;
    scatter += "participant_id,d_young,d_senior,label,true_cohort\n";
    for (const auto& row : report.rows) {
        scatter += row.result.participant_id;
        scatter += ',';
        scatter += fmt_double(row.result.d_young);
        scatter += ',';
        scatter += fmt_double(row.result.d_senior);
        scatter += ',';
        scatter += to_string(row.result.label);
        scatter += ',';
        scatter += to_string(row.true_cohort);
        scatter += '\n';
    }

    std::string accuracy = echo;
    accuracy += "n_total=" + std::to_string(report.n_total) + '\n';
    accuracy += "n_correct=" + std::to_string(report.n_correct) + '\n';
    accuracy += "accuracy=" + fmt_double(report.accuracy) + '\n';
    accuracy += "range_lo=" + std::to_string(range.lo) + '\n';
    accuracy += "range_hi=" + std::to_string(range.hi) + '\n';
    accuracy += "range_step=" + std::to_string(range.step) + '\n';

    fs::path out_dir = need(flags, "--out-dir");
    DirLock lock(out_dir);
    atomic_write(out_dir / "scatter.csv", scatter);
    atomic_write(out_dir / "accuracy.txt", accuracy);

    out << "classify: " << report.n_correct << "/" << report.n_total
        << " correct, accuracy " << fmt_double(report.accuracy) << '\n';
    return 0;
}

// ---- synth ----

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

struct SynthSpec {
    std::uint64_t seed = 0;
    bool have_seed = false;
    std::vector<SegmentSpec> segments;
    std::vector<StopIntersection> stops;
    // group name -> (param -> value), names in lexicographic order
    std::map<std::string, std::map<std::string, std::string>> groups;
    std::vector<std::string> echo_lines;  // the parsed key=value lines
};

SynthSpec parse_synth_spec(std::istream& in, double default_radius_m) {
    if (!in.good()) {
        throw IoError("cannot read synth spec");
    }
    SynthSpec spec;
    std::string line;
    std::size_t line_no = 0;
    std::set<std::string> seen_keys;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string text(trim(line));
        if (text.empty() || text[0] == '#') continue;
        const std::string where = "synth spec line " + std::to_string(line_no);
        std::size_t eq = text.find('=');
        if (eq == std::string::npos) {
            throw ValidationError(where + ": expected key=value");
        }
        std::string key(trim(std::string_view(text).substr(0, eq)));
        std::string value(trim(std::string_view(text).substr(eq + 1)));
        if (!seen_keys.insert(key).second) {
            throw ValidationError(where + ": duplicate key '" + key + "'");
        }
        spec.echo_lines.push_back(key + "=" + value);

        if (key == "seed") {
            spec.seed = require_u64(value, where + " seed");
            spec.have_seed = true;
        } else if (key == "segments") {
            for (const std::string& entry : split_csv(value)) {
                std::size_t colon = entry.find(':');
                if (colon == std::string::npos) {
                    throw ValidationError(where +
                                          ": segment entry needs id:limit");
                }
                SegmentSpec seg;
                seg.segment_id = entry.substr(0, colon);
                seg.posted_limit_mph = require_double(
                    entry.substr(colon + 1), where + " segment limit");
                spec.segments.push_back(std::move(seg));
            }
        } else if (key == "stops") {
            for (const std::string& entry : split_csv(value)) {
                std::vector<std::string> fields;
                std::size_t start = 0;
                while (true) {
                    std::size_t colon = entry.find(':', start);
                    if (colon == std::string::npos) {
                        fields.push_back(entry.substr(start));
                        break;
                    }
                    fields.push_back(entry.substr(start, colon - start));
                    start = colon + 1;
                }
                if (fields.size() < 3 || fields.size() > 4) {
                    throw ValidationError(
                        where + ": stop entry needs id:lat:lon[:radius]");
                }
                StopIntersection stop;
                stop.intersection_id = fields[0];
                stop.lat = require_double(fields[1], where + " stop lat");
                stop.lon = require_double(fields[2], where + " stop lon");
                stop.buffer_radius_m =
                    fields.size() == 4
                        ? require_double(fields[3], where + " stop radius")
                        : default_radius_m;
                spec.stops.push_back(std::move(stop));
            }
        } else if (key.rfind("group.", 0) == 0) {
            std::size_t dot = key.find('.', 6);
            if (dot == std::string::npos || dot == 6 || dot + 1 >= key.size()) {
                throw ValidationError(where +
                                      ": expected group.<name>.<param>");
            }
            std::string name = key.substr(6, dot - 6);
            std::string param = key.substr(dot + 1);
            spec.groups[name][param] = value;
        } else {
            throw ValidationError(where + ": unknown key '" + key + "'");
        }
    }
    if (!spec.have_seed) {
        throw ValidationError("synth spec: missing 'seed'");
    }
    if (spec.groups.empty()) {
        throw ValidationError("synth spec: no groups defined");
    }
    return spec;
}

const std::string& group_param(
    const std::map<std::string, std::string>& params,
    const std::string& group, const std::string& key) {
    auto it = params.find(key);
    if (it == params.end()) {
        throw ValidationError("synth spec: group '" + group +
                              "' is missing '" + key + "'");
    }
    return it->second;
}

int group_param_int(const std::map<std::string, std::string>& params,
                    const std::string& group, const std::string& key) {
    return static_cast<int>(require_i64(group_param(params, group, key),
                                        "group '" + group + "' " + key));
}

double group_param_double(const std::map<std::string, std::string>& params,
                          const std::string& group, const std::string& key,
                          std::optional<double> fallback = std::nullopt) {
    auto it = params.find(key);
    if (it == params.end()) {
        if (fallback) return *fallback;
        throw ValidationError("synth spec: group '" + group +
                              "' is missing '" + key + "'");
    }
    return require_double(it->second, "group '" + group + "' " + key);
}

int cmd_synth(const std::vector<std::string>& args, std::ostream& out,
              std::ostream& /*err*/) {
    Flags flags =
        parse_flags(args, {"--config", "--out-dir", "--spec"}, {});
    PipelineConfig cfg = load_pipeline_config(flags);

    auto spec_in = open_input(need(flags, "--spec"));
    SynthSpec spec = parse_synth_spec(spec_in, cfg.buffer_radius_m);

    static const std::set<std::string> kGroupParams = {
        "kind", "cohort", "id_prefix", "n_participants",
        "trips_per_participant", "points_per_trip", "speed_mean_mph",
        "speed_sd_mph", "decel_mean_ftps2", "decel_sd_ftps2", "age_min",
        "age_max"};

    std::vector<DrivePoint> points;
    std::vector<Participant> roster;
    std::set<std::string> seen_pids;
    for (const auto& [name, params] : spec.groups) {
        for (const auto& [param, value] : params) {
            if (!kGroupParams.count(param)) {
                throw ValidationError("synth spec: group '" + name +
                                      "' has unknown param '" + param + "'");
            }
        }
        const std::string& kind = group_param(params, name, "kind");
        if (kind != "speed" && kind != "stops") {
            throw ValidationError("synth spec: group '" + name +
                                  "' kind must be speed or stops");
        }
        CohortSpec cs;
        auto cohort = parse_cohort(group_param(params, name, "cohort"));
        if (!cohort) {
            throw ValidationError("synth spec: group '" + name +
                                  "' has an unknown cohort");
        }
        cs.cohort = *cohort;
        cs.id_prefix = group_param(params, name, "id_prefix");
        cs.n_participants = group_param_int(params, name, "n_participants");
        cs.trips_per_participant =
            group_param_int(params, name, "trips_per_participant");
        cs.points_per_trip =
            kind == "speed" || params.count("points_per_trip")
                ? group_param_int(params, name, "points_per_trip")
                : 1;
        cs.speed_mean_mph = group_param_double(params, name, "speed_mean_mph");
        cs.speed_sd_mph = group_param_double(params, name, "speed_sd_mph");
        cs.decel_mean_ftps2 =
            group_param_double(params, name, "decel_mean_ftps2", 7.0);
        cs.decel_sd_ftps2 =
            group_param_double(params, name, "decel_sd_ftps2", 2.0);
        cs.age_min = group_param_int(params, name, "age_min");
        cs.age_max = group_param_int(params, name, "age_max");
        cs.segments = spec.segments;
        cs.seed = spec.seed ^ fnv1a64(name);

        std::vector<Participant> group_roster =
            generate_roster(cs, cfg.senior_age_threshold);
        for (const auto& p : group_roster) {
            if (!seen_pids.insert(p.participant_id).second) {
                throw ValidationError(
                    "synth spec: participant id collision on '" +
                    p.participant_id + "' (use distinct id_prefix values)");
            }
        }
        roster.insert(roster.end(), group_roster.begin(), group_roster.end());

        std::vector<DrivePoint> group_points =
            kind == "speed" ? generate_speed_traces(cs)
                            : generate_stop_approaches(cs, spec.stops);
        points.insert(points.end(),
                      std::make_move_iterator(group_points.begin()),
                      std::make_move_iterator(group_points.end()));
    }

    std::string echo;
    for (const auto& line : spec.echo_lines) {
        echo += "# ";
        echo += line;
        echo += '\n';
    }

    fs::path out_dir = need(flags, "--out-dir");
    DirLock lock(out_dir);
    atomic_write(out_dir / "drive.csv", echo + drive_csv(points));
    atomic_write(out_dir / "roster.csv", echo + roster_csv(roster));
    if (!spec.stops.empty()) {
        std::string stops_csv = echo;
        stops_csv += "intersection_id,lat,lon,radius_m\n";
        for (const auto& s : spec.stops) {
            stops_csv += s.intersection_id;
            stops_csv += ',';
            stops_csv += fmt_double(s.lat);
            stops_csv += ',';
            stops_csv += fmt_double(s.lon);
            stops_csv += ',';
            stops_csv += fmt_double(s.buffer_radius_m);
            stops_csv += '\n';
        }
        atomic_write(out_dir / "stops.csv", stops_csv);
    }

    out << "synth: " << spec.groups.size() << " groups, " << roster.size()
        << " participants, " << points.size() << " points\n";
    return 0;
}

// ---- report ----

// Re-emits a CSV artifact under a fresh header: comments are stripped, the
// first data line must match the expected header, data rows pass through
// verbatim.
std::string passthrough_csv(const std::string& path,
                            const std::string& expected_header,
                            const std::string& echo) {
    auto in = open_input(path);
    std::string line;
    std::string body;
    bool saw_header = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (!saw_header) {
            if (line != expected_header) {
                throw ValidationError(path + ": unexpected header '" + line +
                                      "'");
            }
            saw_header = true;
        }
        body += line;
        body += '\n';
    }
    if (!saw_header) {
        throw ValidationError(path + ": missing header row");
    }
    return echo + body;
}

std::map<std::string, std::string> read_kv_file(const std::string& path) {
    auto in = open_input(path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ValidationError(path + ": expected key=value, got '" + line +
                                  "'");
        }
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

std::vector<std::string> read_csv_rows(const std::string& path,
                                       const std::string& expected_header) {
    auto in = open_input(path);
    std::vector<std::string> rows;
    std::string line;
    bool saw_header = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (!saw_header) {
            if (line != expected_header) {
                throw ValidationError(path + ": unexpected header '" + line +
                                      "'");
            }
            saw_header = true;
            continue;
        }
        rows.push_back(line);
    }
    if (!saw_header) {
        throw ValidationError(path + ": missing header row");
    }
    return rows;
}

// Finds an artifact: an explicit flag must exist; otherwise the default
// location is used only when present.
std::optional<std::string> locate(const Flags& flags, const std::string& flag,
                                  const fs::path& fallback) {
    if (auto p = get(flags, flag)) {
        if (!fs::exists(*p)) {
            throw ValidationError("artifact not found: " + *p);
        }
        return *p;
    }
    if (fs::exists(fallback)) return fallback.string();
    return std::nullopt;
}

constexpr const char* kScatterHeader =
    "participant_id,d_young,d_senior,label,true_cohort";
constexpr const char* kKsHeader =
    "metric,cohort_a,cohort_b,n_a,n_b,d,p_value,alpha,significant";

int cmd_report(const std::vector<std::string>& args, std::ostream& out,
               std::ostream& /*err*/) {
    Flags flags = parse_flags(args,
                              {"--config", "--out-dir", "--in-dir", "--curves",
                               "--ks", "--range", "--scatter", "--accuracy"},
                              {});
    PipelineConfig cfg = load_pipeline_config(flags);
    fs::path in_dir = need(flags, "--in-dir");

    // Curve artifacts: explicit ,-separated list, or every *.curve file in
    // the input directory, sorted by name.
    std::vector<std::string> curve_paths;
    if (auto c = get(flags, "--curves")) {
        for (const std::string& p : split_csv(*c)) {
            if (!fs::exists(p)) {
                throw ValidationError("artifact not found: " + p);
            }
            curve_paths.push_back(p);
        }
    } else if (fs::is_directory(in_dir)) {
        for (const auto& entry : fs::directory_iterator(in_dir)) {
            if (entry.is_regular_file() &&
                entry.path().extension() == ".curve") {
                curve_paths.push_back(entry.path().string());
            }
        }
        std::sort(curve_paths.begin(), curve_paths.end());
    }

    auto ks_path = locate(flags, "--ks", in_dir / "ks.csv");
    auto range_path = locate(flags, "--range", in_dir / "range.csv");
    auto scatter_path = locate(flags, "--scatter", in_dir / "scatter.csv");
    auto accuracy_path = locate(flags, "--accuracy", in_dir / "accuracy.txt");

    if (curve_paths.empty() && !ks_path && !range_path && !scatter_path &&
        !accuracy_path) {
        throw ValidationError("no artifacts found in '" + in_dir.string() +
                              "'");
    }

    std::string echo = config_echo(cfg);

    std::optional<std::string> curves_out;
    if (!curve_paths.empty()) {
        std::string body = echo;
        body += "metric,cohort,value,cum_prob\n";
        for (const std::string& path : curve_paths) {
            auto in = open_input(path);
            BaselineCurve curve = read_baseline(in);
            for (std::size_t i = 0; i < curve.cdf.values().size(); ++i) {
                body += to_string(curve.metric);
                body += ',';
                body += to_string(curve.cohort);
                body += ',';
                body += fmt_double(curve.cdf.values()[i]);
                body += ',';
                body += fmt_double(curve.cdf.cum_prob(i));
                body += '\n';
            }
        }
        curves_out = std::move(body);
    }

    std::optional<std::string> scatter_out;
    if (scatter_path) {
        scatter_out = passthrough_csv(*scatter_path, kScatterHeader, echo);
    }
    std::optional<std::string> range_out;
    if (range_path) {
        range_out = passthrough_csv(*range_path, kRangeHeader, echo);
    }

    std::optional<std::string> summary_out;
    if (ks_path || accuracy_path) {
        std::string body = echo;
        if (ks_path) {
            for (const std::string& row : read_csv_rows(*ks_path, kKsHeader)) {
                std::vector<std::string> c = split_csv(row);
                if (c.size() != 9) {
                    throw ValidationError(*ks_path + ": malformed row '" + row +
                                          "'");
                }
                body += "ks metric=" + c[0] + " cohorts=" + c[1] + "/" + c[2] +
                        " n=" + c[3] + "/" + c[4] + " d=" + c[5] +
                        " p=" + c[6] + " alpha=" + c[7] +
                        " significant=" + c[8] + '\n';
            }
        }
        if (accuracy_path) {
            auto kv = read_kv_file(*accuracy_path);
            for (const char* key :
                 {"n_total", "n_correct", "accuracy", "range_lo", "range_hi",
                  "range_step"}) {
                if (!kv.count(key)) {
                    throw ValidationError(*accuracy_path + ": missing '" +
                                          std::string(key) + "'");
                }
            }
            body += "accuracy n_total=" + kv["n_total"] +
                    " n_correct=" + kv["n_correct"] +
                    " accuracy=" + kv["accuracy"] + " range=" + kv["range_lo"] +
                    "-" + kv["range_hi"] + " step=" + kv["range_step"] + '\n';
        }
        summary_out = std::move(body);
    }

    fs::path out_dir = need(flags, "--out-dir");
    DirLock lock(out_dir);
    std::vector<std::string> written;
    if (curves_out) {
        atomic_write(out_dir / "cdf_curves.csv", *curves_out);
        written.push_back("cdf_curves.csv");
    }
    if (scatter_out) {
        atomic_write(out_dir / "scatter.csv", *scatter_out);
        written.push_back("scatter.csv");
    }
    if (range_out) {
        atomic_write(out_dir / "range.csv", *range_out);
        written.push_back("range.csv");
    }
    if (summary_out) {
        atomic_write(out_dir / "summary.txt", *summary_out);
        written.push_back("summary.txt");
    }

    out << "report:";
    for (const auto& name : written) out << ' ' << name;
    out << '\n';
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
    try {
        if (args.empty()) {
            print_usage(err);
            return 64;
        }
        const std::string& cmd = args[0];
        if (cmd == "help" || cmd == "--help" || cmd == "-h") {
            print_usage(out);
            return 0;
        }
        if (cmd == "ingest") return cmd_ingest(args, out, err);
        if (cmd == "extract-stops") return cmd_extract_stops(args, out, err);
        if (cmd == "baseline") return cmd_baseline(args, out, err);
        if (cmd == "kstest") return cmd_kstest(args, out, err);
        if (cmd == "optimize-range") return cmd_optimize_range(args, out, err);
        if (cmd == "classify") return cmd_classify(args, out, err);
        if (cmd == "synth") return cmd_synth(args, out, err);
        if (cmd == "report") return cmd_report(args, out, err);
        err << "error: usage: unknown subcommand '" << cmd << "'\n";
        print_usage(err);
        return 64;
    } catch (const ValidationError& e) {
        err << "error: validation: " << e.what() << '\n';
        return 1;
    } catch (const IoError& e) {
        err << "error: io: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: internal: " << e.what() << '\n';
        return 2;
    }
}

}  // namespace ndd
