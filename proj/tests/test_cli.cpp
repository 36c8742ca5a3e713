#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ndd/baseline.hpp"
#include "ndd/cli.hpp"

using namespace ndd;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int code = -1;
    std::string out;
    std::string err;
};

RunResult run(std::vector<std::string> args) {
    std::ostringstream out, err;
    RunResult r;
    r.code = run_cli(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

fs::path fresh_dir() {
    static int counter = 0;
    fs::path dir = fs::temp_directory_path() /
                   ("ndd_cli_test_" + std::to_string(++counter));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
    REQUIRE(out.good());
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

const char* kSpeedSpec =
    "seed=42\n"
    "segments=I80a:75,I80b:75\n"
    "group.senior.kind=speed\n"
    "group.senior.cohort=senior\n"
    "group.senior.id_prefix=S\n"
    "group.senior.n_participants=4\n"
    "group.senior.trips_per_participant=2\n"
    "group.senior.points_per_trip=60\n"
    "group.senior.speed_mean_mph=70\n"
    "group.senior.speed_sd_mph=2\n"
    "group.senior.age_min=66\n"
    "group.senior.age_max=80\n"
    "group.young.kind=speed\n"
    "group.young.cohort=young\n"
    "group.young.id_prefix=Y\n"
    "group.young.n_participants=4\n"
    "group.young.trips_per_participant=2\n"
    "group.young.points_per_trip=60\n"
    "group.young.speed_mean_mph=82\n"
    "group.young.speed_sd_mph=3\n"
    "group.young.age_min=20\n"
    "group.young.age_max=40\n";

// Small config so the synth fixture clears the sufficiency thresholds.
const char* kSmallConfig =
    "min_points_per_segment=50\n"
    "min_participants_per_segment=2\n";

struct Pipeline {
    fs::path root;
    fs::path synth_dir, ingest_dir, senior_dir, young_dir;
    fs::path ks_dir, range_dir, classify_dir, report_dir;
    fs::path config;

    explicit Pipeline(const fs::path& base) : root(base) {
        synth_dir = root / "synth";
        ingest_dir = root / "ingest";
        senior_dir = root / "senior";
        young_dir = root / "young";
        ks_dir = root / "ks";
        range_dir = root / "range";
        classify_dir = root / "classify";
        report_dir = root / "report";
        config = root / "pipeline.cfg";
        write_file(root / "spec.txt", kSpeedSpec);
        write_file(config, kSmallConfig);
    }

    std::string cfg() const { return config.string(); }

    void run_all() const {
        RunResult r;
        r = run({"synth", "--spec", (root / "spec.txt").string(), "--out-dir",
                 synth_dir.string(), "--config", cfg()});
        REQUIRE_MESSAGE(r.code == 0, r.err);
        r = run({"ingest", "--drive", (synth_dir / "drive.csv").string(),
                 "--roster", (synth_dir / "roster.csv").string(), "--out-dir",
                 ingest_dir.string(), "--config", cfg()});
        REQUIRE_MESSAGE(r.code == 0, r.err);
        for (const char* cohort : {"senior", "young"}) {
            fs::path dir = cohort == std::string("senior") ? senior_dir : young_dir;
            r = run({"baseline", "--metric", "speed:75", "--cohort", cohort,
                     "--roster", (synth_dir / "roster.csv").string(), "--points",
                     (ingest_dir / "points.csv").string(), "--out-dir",
                     dir.string(), "--config", cfg()});
            REQUIRE_MESSAGE(r.code == 0, r.err);
        }
        r = run({"kstest", "--baseline-a",
                 (senior_dir / "senior_speed75.curve").string(), "--baseline-b",
                 (young_dir / "young_speed75.curve").string(), "--out-dir",
                 ks_dir.string(), "--config", cfg()});
        REQUIRE_MESSAGE(r.code == 0, r.err);
        r = run({"optimize-range", "--senior",
                 (senior_dir / "senior_speed75.curve").string(), "--young",
                 (young_dir / "young_speed75.curve").string(), "--points",
                 (ingest_dir / "points.csv").string(), "--out-dir",
                 range_dir.string(), "--config", cfg()});
        REQUIRE_MESSAGE(r.code == 0, r.err);
        r = run({"classify", "--senior",
                 (senior_dir / "senior_speed75.curve").string(), "--young",
                 (young_dir / "young_speed75.curve").string(), "--range",
                 (range_dir / "range.csv").string(), "--roster",
                 (synth_dir / "roster.csv").string(), "--points",
                 (ingest_dir / "points.csv").string(), "--out-dir",
                 classify_dir.string(), "--config", cfg()});
        REQUIRE_MESSAGE(r.code == 0, r.err);

        fs::path staging = root / "artifacts";
        fs::create_directories(staging);
        fs::copy_file(senior_dir / "senior_speed75.curve", staging / "senior_speed75.curve",
                      fs::copy_options::overwrite_existing);
        fs::copy_file(young_dir / "young_speed75.curve", staging / "young_speed75.curve",
                      fs::copy_options::overwrite_existing);
        fs::copy_file(ks_dir / "ks.csv", staging / "ks.csv",
                      fs::copy_options::overwrite_existing);
        fs::copy_file(range_dir / "range.csv", staging / "range.csv",
                      fs::copy_options::overwrite_existing);
        fs::copy_file(classify_dir / "scatter.csv", staging / "scatter.csv",
                      fs::copy_options::overwrite_existing);
        fs::copy_file(classify_dir / "accuracy.txt", staging / "accuracy.txt",
                      fs::copy_options::overwrite_existing);
        r = run({"report", "--in-dir", staging.string(), "--out-dir",
                 report_dir.string(), "--config", cfg()});
        REQUIRE_MESSAGE(r.code == 0, r.err);
    }
};

std::map<std::string, std::string> parse_kv(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::size_t eq = line.find('=');
        if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

std::vector<std::string> data_rows(const std::string& text) {
    std::vector<std::string> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        rows.push_back(line);
    }
    return rows;
}

}  // namespace

TEST_CASE("usage and exit codes") {
    RunResult none = run({});
    CHECK(none.code == 64);
    CHECK(none.err.find("usage") != std::string::npos);

    RunResult help = run({"help"});
    CHECK(help.code == 0);
    CHECK(help.out.find("subcommands") != std::string::npos);

    RunResult unknown = run({"frobnicate"});
    CHECK(unknown.code == 64);
    CHECK(unknown.err.find("error: usage: unknown subcommand 'frobnicate'") !=
          std::string::npos);

    RunResult bad_flag = run({"kstest", "--what", "x"});
    CHECK(bad_flag.code == 1);
    CHECK(bad_flag.err.rfind("error: validation:", 0) == 0);

    RunResult missing_value = run({"kstest", "--baseline-a"});
    CHECK(missing_value.code == 1);

    RunResult missing_input = run({"ingest", "--drive", "/definitely/not/here.csv",
                                   "--roster", "/nor/this.csv", "--out-dir",
                                   fresh_dir().string()});
    CHECK(missing_input.code == 2);
    CHECK(missing_input.err.rfind("error: io:", 0) == 0);
}

TEST_CASE("synth is deterministic and echoes its spec") {
    fs::path root = fresh_dir();
    write_file(root / "spec.txt", kSpeedSpec);
    fs::path a = root / "a";
    fs::path b = root / "b";
    RunResult ra = run({"synth", "--spec", (root / "spec.txt").string(),
                        "--out-dir", a.string()});
    REQUIRE_MESSAGE(ra.code == 0, ra.err);
    RunResult rb = run({"synth", "--spec", (root / "spec.txt").string(),
                        "--out-dir", b.string()});
    REQUIRE_MESSAGE(rb.code == 0, rb.err);

    for (const char* name : {"drive.csv", "roster.csv"}) {
        CHECK(read_file(a / name) == read_file(b / name));
    }
    std::string drive = read_file(a / "drive.csv");
    CHECK(drive.rfind("# seed=42\n", 0) == 0);  // spec echo leads the file
    CHECK(drive.find("participant_id,trip_id,t,") != std::string::npos);
    CHECK(!fs::exists(a / "stops.csv"));  // no stops in this spec
    CHECK(!fs::exists(a / ".lock"));      // lock released

    std::string roster = read_file(a / "roster.csv");
    CHECK(data_rows(roster).size() == 9);  // header + 8 participants
    fs::remove_all(root);
}

TEST_CASE("ingest emits points, segments, and a balanced clean report") {
    fs::path root = fresh_dir();
    Pipeline p(root);
    RunResult r = run({"synth", "--spec", (root / "spec.txt").string(),
                       "--out-dir", p.synth_dir.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    r = run({"ingest", "--drive", (p.synth_dir / "drive.csv").string(),
             "--roster", (p.synth_dir / "roster.csv").string(), "--out-dir",
             p.ingest_dir.string(), "--config", p.cfg()});
    REQUIRE_MESSAGE(r.code == 0, r.err);

    std::string points = read_file(p.ingest_dir / "points.csv");
    CHECK(points.rfind("# tau_segment=", 0) == 0);  // config echo header
    CHECK(data_rows(points).size() == 1 + 960);     // header + every point kept

    std::string segments = read_file(p.ingest_dir / "segments.csv");
    auto seg_rows = data_rows(segments);
    REQUIRE(seg_rows.size() == 3);  // header + both segments
    CHECK(seg_rows[0] ==
          "segment_id,posted_limit_mph,n_points,n_participants,"
          "n_senior_points,n_young_points,n_senior_participants,"
          "n_young_participants");

    auto report = parse_kv(read_file(p.ingest_dir / "clean_report.txt"));
    CHECK(report.at("rows_in") == "960");
    CHECK(report.at("rows_out") == "960");
    CHECK(report.at("rows_dropped_missing") == "0");
    CHECK(report.at("parse_issues") == "0");

    // idempotent rerun into a second directory: byte-identical artifacts
    fs::path again = root / "ingest2";
    r = run({"ingest", "--drive", (p.synth_dir / "drive.csv").string(),
             "--roster", (p.synth_dir / "roster.csv").string(), "--out-dir",
             again.string(), "--config", p.cfg()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    for (const char* name : {"points.csv", "segments.csv", "clean_report.txt"}) {
        CHECK(read_file(p.ingest_dir / name) == read_file(again / name));
    }
    fs::remove_all(root);
}

TEST_CASE("baseline artifacts parse back and identical curves test as equal") {
    fs::path root = fresh_dir();
    Pipeline p(root);
    p.run_all();

    std::ifstream curve_in(p.senior_dir / "senior_speed75.curve");
    BaselineCurve curve = read_baseline(curve_in);
    CHECK(curve.cohort == Cohort::senior);
    CHECK(curve.metric == speed_metric(75));
    CHECK(curve.cdf.sample_count() > 0);

    std::string anomalies = read_file(p.senior_dir / "anomalies.csv");
    CHECK(data_rows(anomalies)[0] == "level,group_id,ks_distance,iteration");

    // the same curve against itself: D = 0, p = 1, not significant
    fs::path self_dir = root / "self_ks";
    RunResult r = run({"kstest", "--baseline-a",
                       (p.senior_dir / "senior_speed75.curve").string(),
                       "--baseline-b",
                       (p.senior_dir / "senior_speed75.curve").string(),
                       "--out-dir", self_dir.string(), "--config", p.cfg()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    auto rows = data_rows(read_file(self_dir / "ks.csv"));
    REQUIRE(rows.size() == 2);
    CHECK(rows[0] ==
          "metric,cohort_a,cohort_b,n_a,n_b,d,p_value,alpha,significant");
    CHECK(rows[1].find("speed:75,senior,senior") == 0);
    CHECK(rows[1].find(",0,1,0.05,0") != std::string::npos);

    // the two planted cohorts are far apart: significant
    auto cohort_rows = data_rows(read_file(p.ks_dir / "ks.csv"));
    REQUIRE(cohort_rows.size() == 2);
    CHECK(cohort_rows[1].back() == '1');
    fs::remove_all(root);
}

TEST_CASE("optimize-range and classify produce consistent artifacts") {
    fs::path root = fresh_dir();
    Pipeline p(root);
    p.run_all();

    std::string range_text = read_file(p.range_dir / "range.csv");
    auto range_rows = data_rows(range_text);
    REQUIRE(range_rows.size() == 2);
    CHECK(range_rows[0] == "lo,hi,step,objective");
    // screening against the senior baseline drops the young participants
    CHECK(range_text.find("# screened_out=Y") != std::string::npos);

    auto accuracy = parse_kv(read_file(p.classify_dir / "accuracy.txt"));
    CHECK(accuracy.at("n_total") == "8");
    CHECK(accuracy.at("n_correct") == "8");  // 12 mph separation: all correct
    CHECK(accuracy.at("accuracy") == "1");

    auto scatter_rows = data_rows(read_file(p.classify_dir / "scatter.csv"));
    REQUIRE(scatter_rows.size() == 9);
    CHECK(scatter_rows[0] == "participant_id,d_young,d_senior,label,true_cohort");
    for (std::size_t i = 1; i < scatter_rows.size(); ++i) {
        const std::string& row = scatter_rows[i];
        bool senior_row = row.rfind("S", 0) == 0;
        CHECK(row.find(senior_row ? ",senior,senior" : ",young,young") !=
              std::string::npos);
    }
    fs::remove_all(root);
}

TEST_CASE("report emits everything it can find, and only that") {
    fs::path root = fresh_dir();
    Pipeline p(root);
    p.run_all();

    for (const char* name :
         {"cdf_curves.csv", "scatter.csv", "range.csv", "summary.txt"}) {
        CHECK(fs::exists(p.report_dir / name));
    }
    std::string summary = read_file(p.report_dir / "summary.txt");
    CHECK(summary.find("ks metric=speed:75 cohorts=senior/young") != std::string::npos);
    CHECK(summary.find("accuracy n_total=8 n_correct=8 accuracy=1 range=") !=
          std::string::npos);

    std::string curves = read_file(p.report_dir / "cdf_curves.csv");
    auto curve_rows = data_rows(curves);
    CHECK(curve_rows[0] == "metric,cohort,value,cum_prob");
    CHECK(curve_rows.size() > 2);
    CHECK(curves.find("speed:75,senior,") != std::string::npos);
    CHECK(curves.find("speed:75,young,") != std::string::npos);

    // baseline-only input: cdf_curves.csv alone
    fs::path only_curves = root / "only_curves";
    fs::create_directories(only_curves);
    fs::copy_file(p.senior_dir / "senior_speed75.curve",
                  only_curves / "senior_speed75.curve");
    fs::path partial_out = root / "partial_report";
    RunResult r = run({"report", "--in-dir", only_curves.string(), "--out-dir",
                       partial_out.string(), "--config", p.cfg()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(fs::exists(partial_out / "cdf_curves.csv"));
    CHECK(!fs::exists(partial_out / "scatter.csv"));
    CHECK(!fs::exists(partial_out / "range.csv"));
    CHECK(!fs::exists(partial_out / "summary.txt"));

    // rerun into another directory: byte-identical report
    fs::path report2 = root / "report2";
    r = run({"report", "--in-dir", (root / "artifacts").string(), "--out-dir",
             report2.string(), "--config", p.cfg()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    for (const char* name :
         {"cdf_curves.csv", "scatter.csv", "range.csv", "summary.txt"}) {
        CHECK(read_file(p.report_dir / name) == read_file(report2 / name));
    }

    // explicitly named artifacts must exist
    RunResult missing = run({"report", "--in-dir", only_curves.string(),
                             "--ks", (root / "nope.csv").string(), "--out-dir",
                             (root / "r3").string()});
    CHECK(missing.code == 1);
    CHECK(missing.err.find("artifact not found: ") != std::string::npos);
    CHECK(missing.err.find("nope.csv") != std::string::npos);

    // an empty directory has nothing to report
    RunResult empty = run({"report", "--in-dir", fresh_dir().string(),
                           "--out-dir", (root / "r4").string()});
    CHECK(empty.code == 1);
    CHECK(empty.err.find("no artifacts found") != std::string::npos);
    fs::remove_all(root);
}

TEST_CASE("an output directory lock blocks concurrent writers") {
    fs::path root = fresh_dir();
    write_file(root / "spec.txt", kSpeedSpec);
    fs::path out = root / "out";
    fs::create_directories(out);
    write_file(out / ".lock", "");
    RunResult r = run({"synth", "--spec", (root / "spec.txt").string(),
                       "--out-dir", out.string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("is locked") != std::string::npos);
    CHECK(!fs::exists(out / "drive.csv"));
    fs::remove_all(root);
}

TEST_CASE("failed commands leave no partial outputs behind") {
    fs::path root = fresh_dir();
    Pipeline p(root);
    RunResult r = run({"synth", "--spec", (root / "spec.txt").string(),
                       "--out-dir", p.synth_dir.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    r = run({"ingest", "--drive", (p.synth_dir / "drive.csv").string(),
             "--roster", (p.synth_dir / "roster.csv").string(), "--out-dir",
             p.ingest_dir.string(), "--config", p.cfg()});
    REQUIRE_MESSAGE(r.code == 0, r.err);

    // no samples exist at a 99 mph limit, so this fails after locking
    fs::path out = root / "bad_baseline";
    r = run({"baseline", "--metric", "speed:99", "--cohort", "senior",
             "--roster", (p.synth_dir / "roster.csv").string(), "--points",
             (p.ingest_dir / "points.csv").string(), "--out-dir", out.string(),
             "--config", p.cfg()});
    CHECK(r.code == 1);
    // validation precedes locking, so the directory is either never created
    // or left empty: no artifacts, no .tmp, no stale .lock
    CHECK((!fs::exists(out) || fs::is_empty(out)));
    fs::remove_all(root);
}

TEST_CASE("DRIVEBASELINE_CONFIG overrides the flag-free default") {
    fs::path root = fresh_dir();
    write_file(root / "spec.txt", kSpeedSpec);
    write_file(root / "env.cfg", "tau_segment=0.31\n");
    ::setenv("DRIVEBASELINE_CONFIG", (root / "env.cfg").c_str(), 1);
    fs::path out = root / "out";
    RunResult r = run({"synth", "--spec", (root / "spec.txt").string(),
                       "--out-dir", out.string()});
    ::unsetenv("DRIVEBASELINE_CONFIG");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    // synth echoes its spec, so prove the env config was loaded by breaking it
    ::setenv("DRIVEBASELINE_CONFIG", (root / "missing.cfg").c_str(), 1);
    RunResult io = run({"synth", "--spec", (root / "spec.txt").string(),
                        "--out-dir", (root / "out2").string()});
    ::unsetenv("DRIVEBASELINE_CONFIG");
    CHECK(io.code == 2);
    CHECK(io.err.rfind("error: io:", 0) == 0);

    write_file(root / "bad.cfg", "tau_segment=7\n");
    ::setenv("DRIVEBASELINE_CONFIG", (root / "bad.cfg").c_str(), 1);
    RunResult bad = run({"synth", "--spec", (root / "spec.txt").string(),
                         "--out-dir", (root / "out3").string()});
    ::unsetenv("DRIVEBASELINE_CONFIG");
    CHECK(bad.code == 1);
    CHECK(bad.err.find("tau_segment") != std::string::npos);
    fs::remove_all(root);
}

TEST_CASE("the installed binary behaves like the in-process entry point") {
    const char* bin = std::getenv("DRIVEBASELINE_BIN");
    if (!bin) {
        MESSAGE("DRIVEBASELINE_BIN not set; skipping spawned-binary checks");
        return;
    }
    fs::path root = fresh_dir();
    write_file(root / "spec.txt", kSpeedSpec);

    std::string help = std::string("\"") + bin + "\" help > /dev/null 2>&1";
    CHECK(std::system(help.c_str()) == 0);

    fs::path spawned = root / "spawned";
    std::string synth = std::string("\"") + bin + "\" synth --spec \"" +
                        (root / "spec.txt").string() + "\" --out-dir \"" +
                        spawned.string() + "\" > /dev/null 2>&1";
    REQUIRE(std::system(synth.c_str()) == 0);

    fs::path local = root / "local";
    RunResult r = run({"synth", "--spec", (root / "spec.txt").string(),
                       "--out-dir", local.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(read_file(spawned / "drive.csv") == read_file(local / "drive.csv"));
    CHECK(read_file(spawned / "roster.csv") == read_file(local / "roster.csv"));
    fs::remove_all(root);
}
