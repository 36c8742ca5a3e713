#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ndd {

enum class RoadClass { interstate, other };
enum class Cohort { senior, young };
enum class Sex { male, female, unspecified };

std::string_view to_string(RoadClass rc);
std::string_view to_string(Cohort c);
std::string_view to_string(Sex s);
std::optional<RoadClass> parse_road_class(std::string_view s);
std::optional<Cohort> parse_cohort(std::string_view s);
std::optional<Sex> parse_sex(std::string_view s);

// One per-second telemetry sample. lat/lon/speed may be absent on a freshly
// parsed point; clean() removes those rows.
struct DrivePoint {
    std::string participant_id;
    std::string trip_id;
    std::int64_t t = 0;  // seconds since trip start
    std::optional<double> lat;
    std::optional<double> lon;
    std::optional<double> speed_mph;
    RoadClass road_class = RoadClass::other;
    std::string segment_id;
    std::optional<double> posted_limit_mph;
    std::optional<double> accel_ftps2;
};

struct Participant {
    std::string participant_id;
    int age = 0;
    Sex sex = Sex::unspecified;
    Cohort cohort = Cohort::young;
};

using Roster = std::map<std::string, Participant>;

// One rejected input row. line is 1-based and counts every physical line,
// comments and header included.
struct ParseIssue {
    std::size_t line = 0;
    std::string column;
    std::string message;
};

enum class DriveFormat { csv, jsonl };

struct ParsedDrive {
    std::vector<DrivePoint> points;
    std::vector<ParseIssue> issues;
};

struct RosterParse {
    Roster participants;
    std::vector<ParseIssue> issues;
};

// Drive CSV columns (exact names, any order): participant_id, trip_id, t,
// lat, lon, speed_mph, road_class, segment_id, posted_limit_mph and the
// optional accel_ftps2. Empty string = absent. JSONL mirrors the same field
// names, with null or a missing key meaning absent. Lines starting with '#'
// are skipped in both formats.
//
// Every well-formed row becomes one DrivePoint, order preserved; each
// malformed row becomes one ParseIssue naming the line and offending column.
// Throws IoError when the stream is unreadable and ValidationError when a
// required CSV header column is missing.
ParsedDrive parse_drive_records(std::istream& in, DriveFormat format);

// Roster CSV: participant_id, age, sex (empty sex = unspecified). Cohort is
// derived from age via assign_cohort. Duplicate participant_id is fatal.
RosterParse parse_roster(std::istream& in, int senior_age_threshold);

struct CleanReport {
    std::uint64_t rows_in = 0;
    std::uint64_t rows_dropped_missing = 0;
    std::uint64_t rows_dropped_filter = 0;
    std::uint64_t rows_out = 0;
    std::map<std::string, std::uint64_t> dropped_by_reason;

    bool balanced() const {
        return rows_in == rows_out + rows_dropped_missing + rows_dropped_filter;
    }
};

struct CleanResult {
    std::vector<DrivePoint> points;
    CleanReport report;
};

// Keeps exactly the points with lat, lon and speed present. Absent accel is
// not a drop reason: acceleration is recomputed downstream from the speed
// trace. Reasons: missing_gps, missing_speed (first match counts).
CleanResult clean(std::span<const DrivePoint> points);

struct SegmentSummary {
    std::string segment_id;
    double posted_limit_mph = 0.0;
    std::uint64_t n_points = 0;
    std::uint64_t n_participants = 0;
    std::uint64_t n_senior_points = 0;
    std::uint64_t n_young_points = 0;
    std::uint64_t n_senior_participants = 0;
    std::uint64_t n_young_participants = 0;
};

struct FilterResult {
    std::vector<DrivePoint> points;
    std::vector<SegmentSummary> summaries;
    std::map<std::string, std::uint64_t> dropped_by_reason;

    std::uint64_t rows_dropped() const;
};

// Retains points on the requested road class whose posted limit is present
// and >= min_limit_mph, then removes whole segments with fewer than
// min_points_per_segment points or min_participants_per_segment distinct
// participants. Summaries describe retained segments only, sorted by
// segment_id; per-cohort counts are filled when a roster is supplied (an
// unknown participant is then a ValidationError). A segment's posted limit in
// the summary is the most frequent retained value (ties to the larger).
FilterResult filter_select(std::span<const DrivePoint> points,
                           double min_limit_mph,
                           RoadClass road_class,
                           std::uint64_t min_points_per_segment,
                           std::uint64_t min_participants_per_segment,
                           const Roster* roster = nullptr);

// senior iff age >= threshold. Ages below the licensing floor (16) are
// rejected.
Cohort assign_cohort(int age, int threshold);

// Groups points into per-trip vectors keyed by (participant_id, trip_id),
// sorted by t within each trip. Trips are ordered by key. A duplicate
// timestamp within a trip violates the strictly-increasing-t invariant and
// throws.
std::vector<std::vector<DrivePoint>> assemble_trips(std::span<const DrivePoint> points);

// Writers for the two telemetry schemas. Points/participants are emitted in
// input order with numbers in shortest round-trip form.
std::string drive_csv(std::span<const DrivePoint> points);
std::string roster_csv(std::span<const Participant> participants);

}  // namespace ndd
