#include "ndd/telemetry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "ndd/error.hpp"
#include "ndd/util.hpp"

namespace ndd {

std::string_view to_string(RoadClass rc) {
    return rc == RoadClass::interstate ? "interstate" : "other";
}

std::string_view to_string(Cohort c) {
    return c == Cohort::senior ? "senior" : "young";
}

std::string_view to_string(Sex s) {
    switch (s) {
        case Sex::male: return "male";
        case Sex::female: return "female";
        default: return "unspecified";
    }
}

std::optional<RoadClass> parse_road_class(std::string_view s) {
    if (s == "interstate") return RoadClass::interstate;
    if (s == "other") return RoadClass::other;
    return std::nullopt;
}

std::optional<Cohort> parse_cohort(std::string_view s) {
    if (s == "senior") return Cohort::senior;
    if (s == "young") return Cohort::young;
    return std::nullopt;
}

std::optional<Sex> parse_sex(std::string_view s) {
    if (s == "male") return Sex::male;
    if (s == "female") return Sex::female;
    if (s == "unspecified" || s.empty()) return Sex::unspecified;
    return std::nullopt;
}

namespace {

constexpr const char* kDriveColumns[] = {
    "participant_id", "trip_id", "t", "lat", "lon",
    "speed_mph", "road_class", "segment_id", "posted_limit_mph",
};

struct RowError {
    std::string column;
    std::string message;
};

// Field checks shared by the CSV and JSONL readers. Returns the first
// problem, or nullopt and fills the point.
std::optional<RowError> fill_point(DrivePoint& p,
                                   const std::string& participant_id,
                                   const std::string& trip_id,
                                   std::optional<std::int64_t> t, bool t_bad,
                                   std::optional<double> lat, bool lat_bad,
                                   std::optional<double> lon, bool lon_bad,
                                   std::optional<double> speed, bool speed_bad,
                                   std::optional<RoadClass> road_class,
                                   const std::string& segment_id,
                                   std::optional<double> limit, bool limit_bad,
                                   std::optional<double> accel, bool accel_bad) {
    if (participant_id.empty()) return RowError{"participant_id", "must be non-empty"};
    if (trip_id.empty()) return RowError{"trip_id", "must be non-empty"};
    if (t_bad || !t || *t < 0) return RowError{"t", "must be a non-negative integer"};
    if (lat_bad) return RowError{"lat", "not a number"};
    if (lat && (*lat < -90.0 || *lat > 90.0)) return RowError{"lat", "out of bounds [-90,90]"};
    if (lon_bad) return RowError{"lon", "not a number"};
    if (lon && (*lon < -180.0 || *lon > 180.0)) return RowError{"lon", "out of bounds [-180,180]"};
    if (speed_bad) return RowError{"speed_mph", "not a number"};
    if (speed && (!(*speed >= 0.0) || !std::isfinite(*speed))) {
        return RowError{"speed_mph", "must be >= 0"};
    }
    if (!road_class) return RowError{"road_class", "must be 'interstate' or 'other'"};
    if (segment_id.empty()) return RowError{"segment_id", "must be non-empty"};
    if (limit_bad) return RowError{"posted_limit_mph", "not a number"};
    if (limit && !(*limit > 0.0 && std::isfinite(*limit))) {
        return RowError{"posted_limit_mph", "must be positive"};
    }
    if (accel_bad) return RowError{"accel_ftps2", "not a number"};

    p.participant_id = participant_id;
    p.trip_id = trip_id;
    p.t = *t;
    p.lat = lat;
    p.lon = lon;
    p.speed_mph = speed;
    p.road_class = *road_class;
    p.segment_id = segment_id;
    p.posted_limit_mph = limit;
    p.accel_ftps2 = accel;
    return std::nullopt;
}

ParsedDrive parse_drive_csv(std::istream& in) {
    ParsedDrive out;
    std::string line;
    std::size_t line_no = 0;

    // Header: first non-comment line.
    std::map<std::string, std::size_t, std::less<>> col;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line[0] == '#') continue;
        const auto names = split_csv(line);
        for (std::size_t i = 0; i < names.size(); ++i) {
            col.emplace(names[i], i);
        }
        break;
    }
    if (col.empty()) {
        throw ValidationError("drive csv: missing header line");
    }
    for (const char* required : kDriveColumns) {
        if (!col.contains(required)) {
            throw ValidationError(std::string("drive csv: header missing required column '") +
                                  required + "'");
        }
    }
    const bool has_accel = col.contains("accel_ftps2");
    const std::size_t n_cols = col.size();

    auto field = [&](const std::vector<std::string>& row, const char* name) -> const std::string& {
        return row[col.find(name)->second];
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto row = split_csv(line);
        if (row.size() != n_cols) {
            out.issues.push_back({line_no, "",
                                  "expected " + std::to_string(n_cols) + " fields, got " +
                                      std::to_string(row.size())});
            continue;
        }
        auto opt_num = [](const std::string& s, bool& bad) -> std::optional<double> {
            if (s.empty()) return std::nullopt;
            const auto v = parse_double(s);
            bad = !v.has_value();
            return v;
        };
        bool t_bad = false, lat_bad = false, lon_bad = false, speed_bad = false,
             limit_bad = false, accel_bad = false;
        std::optional<std::int64_t> t;
        {
            const std::string& s = field(row, "t");
            t = parse_i64(s);
            t_bad = !s.empty() && !t.has_value();
        }
        const auto lat = opt_num(field(row, "lat"), lat_bad);
        const auto lon = opt_num(field(row, "lon"), lon_bad);
        const auto speed = opt_num(field(row, "speed_mph"), speed_bad);
        const auto limit = opt_num(field(row, "posted_limit_mph"), limit_bad);
        std::optional<double> accel;
        if (has_accel) accel = opt_num(field(row, "accel_ftps2"), accel_bad);

        DrivePoint p;
        const auto err = fill_point(p, field(row, "participant_id"), field(row, "trip_id"),
                                    t, t_bad, lat, lat_bad, lon, lon_bad, speed, speed_bad,
                                    parse_road_class(field(row, "road_class")),
                                    field(row, "segment_id"), limit, limit_bad, accel, accel_bad);
        if (err) {
            out.issues.push_back({line_no, err->column, err->message});
        } else {
            out.points.push_back(std::move(p));
        }
    }
    return out;
}

ParsedDrive parse_drive_jsonl(std::istream& in) {
    ParsedDrive out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty() || line[0] == '#') continue;

        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            out.issues.push_back({line_no, "", "not a JSON object"});
            continue;
        }
        auto str = [&](const char* key) -> std::string {
            const auto it = j.find(key);
            if (it == j.end() || it->is_null()) return "";
            return it->is_string() ? it->get<std::string>() : "";
        };
        auto num = [&](const char* key, bool& bad) -> std::optional<double> {
            const auto it = j.find(key);
            if (it == j.end() || it->is_null()) return std::nullopt;
            if (!it->is_number()) {
                bad = true;
                return std::nullopt;
            }
            return it->get<double>();
        };
        bool t_bad = false, lat_bad = false, lon_bad = false, speed_bad = false,
             limit_bad = false, accel_bad = false;
        std::optional<std::int64_t> t;
        {
            const auto it = j.find("t");
            if (it != j.end() && !it->is_null()) {
                if (it->is_number_integer()) {
                    t = it->get<std::int64_t>();
                } else {
                    t_bad = true;
                }
            }
        }
        const auto lat = num("lat", lat_bad);
        const auto lon = num("lon", lon_bad);
        const auto speed = num("speed_mph", speed_bad);
        const auto limit = num("posted_limit_mph", limit_bad);
        const auto accel = num("accel_ftps2", accel_bad);

        DrivePoint p;
        const auto err = fill_point(p, str("participant_id"), str("trip_id"),
                                    t, t_bad, lat, lat_bad, lon, lon_bad, speed, speed_bad,
                                    parse_road_class(str("road_class")), str("segment_id"),
                                    limit, limit_bad, accel, accel_bad);
        if (err) {
            out.issues.push_back({line_no, err->column, err->message});
        } else {
            out.points.push_back(std::move(p));
        }
    }
    return out;
}

}  // namespace

ParsedDrive parse_drive_records(std::istream& in, DriveFormat format) {
    if (!in.good()) {
        throw IoError("drive records: stream is not readable");
    }
    return format == DriveFormat::csv ? parse_drive_csv(in) : parse_drive_jsonl(in);
}

RosterParse parse_roster(std::istream& in, int senior_age_threshold) {
    if (!in.good()) {
        throw IoError("roster: stream is not readable");
    }
    RosterParse out;
    std::string line;
    std::size_t line_no = 0;

    std::map<std::string, std::size_t, std::less<>> col;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line[0] == '#') continue;
        const auto names = split_csv(line);
        for (std::size_t i = 0; i < names.size(); ++i) {
            col.emplace(names[i], i);
        }
        break;
    }
    if (col.empty()) {
        throw ValidationError("roster csv: missing header line");
    }
    for (const char* required : {"participant_id", "age", "sex"}) {
        if (!col.contains(required)) {
            throw ValidationError(std::string("roster csv: header missing required column '") +
                                  required + "'");
        }
    }
    const std::size_t n_cols = col.size();
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto row = split_csv(line);
        if (row.size() != n_cols) {
            out.issues.push_back({line_no, "", "wrong field count"});
            continue;
        }
        const std::string& id = row[col.find("participant_id")->second];
        if (id.empty()) {
            out.issues.push_back({line_no, "participant_id", "must be non-empty"});
            continue;
        }
        const auto age = parse_i64(row[col.find("age")->second]);
        if (!age || *age < 16) {
            out.issues.push_back({line_no, "age", "must be an integer >= 16"});
            continue;
        }
        const auto sex = parse_sex(row[col.find("sex")->second]);
        if (!sex) {
            out.issues.push_back({line_no, "sex", "must be male, female or unspecified"});
            continue;
        }
        if (out.participants.contains(id)) {
            throw ValidationError("roster csv: duplicate participant_id '" + id + "'");
        }
        Participant p;
        p.participant_id = id;
        p.age = static_cast<int>(*age);
        p.sex = *sex;
        p.cohort = assign_cohort(p.age, senior_age_threshold);
        out.participants.emplace(id, std::move(p));
    }
    return out;
}

CleanResult clean(std::span<const DrivePoint> points) {
    CleanResult out;
    out.report.rows_in = points.size();
    for (const DrivePoint& p : points) {
        if (!p.lat || !p.lon) {
            ++out.report.rows_dropped_missing;
            ++out.report.dropped_by_reason["missing_gps"];
        } else if (!p.speed_mph) {
            ++out.report.rows_dropped_missing;
            ++out.report.dropped_by_reason["missing_speed"];
        } else {
            out.points.push_back(p);
        }
    }
    out.report.rows_out = out.points.size();
    return out;
}

std::uint64_t FilterResult::rows_dropped() const {
    std::uint64_t total = 0;
    for (const auto& [reason, count] : dropped_by_reason) {
        total += count;
    }
    return total;
}

FilterResult filter_select(std::span<const DrivePoint> points,
                           double min_limit_mph,
                           RoadClass road_class,
                           std::uint64_t min_points_per_segment,
                           std::uint64_t min_participants_per_segment,
                           const Roster* roster) {
    FilterResult out;

    std::vector<DrivePoint> kept;
    kept.reserve(points.size());
    for (const DrivePoint& p : points) {
        if (p.road_class != road_class) {
            ++out.dropped_by_reason["road_class"];
        } else if (!p.posted_limit_mph) {
            ++out.dropped_by_reason["absent_posted_limit"];
        } else if (*p.posted_limit_mph < min_limit_mph) {
            ++out.dropped_by_reason["below_min_limit"];
        } else {
            kept.push_back(p);
        }
    }

    struct SegmentStats {
        std::uint64_t n_points = 0;
        std::map<std::string, std::uint64_t> points_per_participant;
        std::map<double, std::uint64_t> limit_counts;
    };
    std::map<std::string, SegmentStats> segments;
    for (const DrivePoint& p : kept) {
        auto& s = segments[p.segment_id];
        ++s.n_points;
        ++s.points_per_participant[p.participant_id];
        ++s.limit_counts[*p.posted_limit_mph];
    }

    std::map<std::string, bool> retained;
    for (const auto& [id, s] : segments) {
        retained[id] = s.n_points >= min_points_per_segment &&
                       s.points_per_participant.size() >= min_participants_per_segment;
    }

    for (const DrivePoint& p : kept) {
        if (retained[p.segment_id]) {
            out.points.push_back(p);
        } else {
            ++out.dropped_by_reason["segment_insufficient"];
        }
    }

    for (const auto& [id, s] : segments) {
        if (!retained[id]) continue;
        SegmentSummary sum;
        sum.segment_id = id;
        sum.n_points = s.n_points;
        sum.n_participants = s.points_per_participant.size();
        std::uint64_t best_count = 0;
        for (const auto& [limit, count] : s.limit_counts) {
            if (count >= best_count) {  // ties go to the larger limit
                best_count = count;
                sum.posted_limit_mph = limit;
            }
        }
        if (roster) {
            for (const auto& [pid, n] : s.points_per_participant) {
                const auto it = roster->find(pid);
                if (it == roster->end()) {
                    throw ValidationError("filter_select: participant '" + pid +
                                          "' not in roster");
                }
                if (it->second.cohort == Cohort::senior) {
                    ++sum.n_senior_participants;
                    sum.n_senior_points += n;
                } else {
                    ++sum.n_young_participants;
                    sum.n_young_points += n;
                }
            }
        }
        out.summaries.push_back(std::move(sum));
    }
    return out;
}

Cohort assign_cohort(int age, int threshold) {
    if (age < 16) {
        throw ValidationError("assign_cohort: age below licensing floor (16)");
    }
    return age >= threshold ? Cohort::senior : Cohort::young;
}

std::vector<std::vector<DrivePoint>> assemble_trips(std::span<const DrivePoint> points) {
    std::map<std::pair<std::string, std::string>, std::vector<DrivePoint>> trips;
    for (const DrivePoint& p : points) {
        trips[{p.participant_id, p.trip_id}].push_back(p);
    }
    std::vector<std::vector<DrivePoint>> out;
    out.reserve(trips.size());
    for (auto& [key, trip] : trips) {
        std::stable_sort(trip.begin(), trip.end(),
                         [](const DrivePoint& a, const DrivePoint& b) { return a.t < b.t; });
        for (std::size_t i = 1; i < trip.size(); ++i) {
            if (trip[i].t == trip[i - 1].t) {
                throw ValidationError("assemble_trips: duplicate timestamp t=" +
                                      std::to_string(trip[i].t) + " in trip '" + key.second +
                                      "' of participant '" + key.first + "'");
            }
        }
        out.push_back(std::move(trip));
    }
    return out;
}

std::string drive_csv(std::span<const DrivePoint> points) {
    std::string out = "participant_id,trip_id,t,lat,lon,speed_mph,road_class,segment_id,"
                      "posted_limit_mph,accel_ftps2\n";
    auto opt = [](const std::optional<double>& v) { return v ? fmt_double(*v) : std::string(); };
    for (const DrivePoint& p : points) {
        out += p.participant_id;
        out += ',';
        out += p.trip_id;
        out += ',';
        out += std::to_string(p.t);
        out += ',';
        out += opt(p.lat);
        out += ',';
        out += opt(p.lon);
        out += ',';
        out += opt(p.speed_mph);
        out += ',';
        out += to_string(p.road_class);
        out += ',';
        out += p.segment_id;
        out += ',';
        out += opt(p.posted_limit_mph);
        out += ',';
        out += opt(p.accel_ftps2);
        out += '\n';
    }
    return out;
}

std::string roster_csv(std::span<const Participant> participants) {
    std::string out = "participant_id,age,sex\n";
    for (const Participant& p : participants) {
        out += p.participant_id;
        out += ',';
        out += std::to_string(p.age);
        out += ',';
        out += to_string(p.sex);
        out += '\n';
    }
    return out;
}

}  // namespace ndd
