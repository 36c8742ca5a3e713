#include <doctest.h>

#include <sstream>
#include <string>
#include <vector>

#include "ndd/error.hpp"
#include "ndd/telemetry.hpp"

using namespace ndd;

namespace {

const char* kHeader =
    "participant_id,trip_id,t,lat,lon,speed_mph,road_class,segment_id,"
    "posted_limit_mph,accel_ftps2\n";

ParsedDrive parse_csv(const std::string& body) {
    std::istringstream in(std::string(kHeader) + body);
    return parse_drive_records(in, DriveFormat::csv);
}

DrivePoint make_point(const std::string& pid, const std::string& trip,
                      std::int64_t t, double speed,
                      const std::string& segment = "S1",
                      std::optional<double> limit = 75.0) {
    DrivePoint p;
    p.participant_id = pid;
    p.trip_id = trip;
    p.t = t;
    p.lat = 41.0;
    p.lon = -93.5;
    p.speed_mph = speed;
    p.road_class = RoadClass::interstate;
    p.segment_id = segment;
    p.posted_limit_mph = limit;
    return p;
}

}  // namespace

TEST_CASE("csv rows map to points field by field") {
    ParsedDrive d = parse_csv("P1,T1,0,41.5,-93.25,71.5,interstate,S9,75,\n");
    REQUIRE(d.issues.empty());
    REQUIRE(d.points.size() == 1);
    const DrivePoint& p = d.points[0];
    CHECK(p.participant_id == "P1");
    CHECK(p.trip_id == "T1");
    CHECK(p.t == 0);
    CHECK(p.lat == 41.5);
    CHECK(p.lon == -93.25);
    CHECK(p.speed_mph == 71.5);
    CHECK(p.road_class == RoadClass::interstate);
    CHECK(p.segment_id == "S9");
    CHECK(p.posted_limit_mph == 75.0);
    CHECK(!p.accel_ftps2.has_value());
}

TEST_CASE("csv header only gives an empty parse") {
    ParsedDrive d = parse_csv("");
    CHECK(d.points.empty());
    CHECK(d.issues.empty());
}

TEST_CASE("csv bad rows become issues with line and column") {
    ParsedDrive d = parse_csv(
        "P1,T1,0,not_a_number,-93.25,71.5,interstate,S9,75,\n"
        "P1,T1,1,41.5,-93.25,71.5,interstate,S9,75,\n"
        "P1,T1,-4,41.5,-93.25,71.5,interstate,S9,75,\n"
        "P1,T1,2,41.5,-93.25,71.5,dirt_road,S9,75,\n"
        "too,few,fields\n");
    CHECK(d.points.size() == 1);
    REQUIRE(d.issues.size() == 4);
    CHECK(d.issues[0].line == 2);
    CHECK(d.issues[0].column == "lat");
    CHECK(d.issues[1].line == 4);
    CHECK(d.issues[1].column == "t");
    CHECK(d.issues[2].column == "road_class");
    CHECK(d.issues[3].line == 6);
}

TEST_CASE("csv absent optional fields parse as empty optionals") {
    ParsedDrive d = parse_csv("P1,T1,0,,,,other,S9,,\n");
    REQUIRE(d.points.size() == 1);
    CHECK(!d.points[0].lat.has_value());
    CHECK(!d.points[0].lon.has_value());
    CHECK(!d.points[0].speed_mph.has_value());
    CHECK(!d.points[0].posted_limit_mph.has_value());
}

TEST_CASE("csv bounds checks") {
    ParsedDrive d = parse_csv(
        "P1,T1,0,91.0,-93.25,71.5,interstate,S9,75,\n"
        "P1,T1,1,41.5,-183.0,71.5,interstate,S9,75,\n"
        "P1,T1,2,41.5,-93.25,-3.0,interstate,S9,75,\n"
        "P1,T1,3,41.5,-93.25,71.5,interstate,S9,0,\n");
    CHECK(d.points.empty());
    REQUIRE(d.issues.size() == 4);
    CHECK(d.issues[0].column == "lat");
    CHECK(d.issues[1].column == "lon");
    CHECK(d.issues[2].column == "speed_mph");
    CHECK(d.issues[3].column == "posted_limit_mph");
}

TEST_CASE("csv requires every mandatory header column") {
    std::istringstream in("participant_id,trip_id,t,lat,lon,road_class,segment_id\n");
    CHECK_THROWS_AS(parse_drive_records(in, DriveFormat::csv), ValidationError);
    std::istringstream empty("");
    CHECK_THROWS_AS(parse_drive_records(empty, DriveFormat::csv), ValidationError);
}

TEST_CASE("csv tolerates comment lines and shuffled column order") {
    std::istringstream in(
        "# produced by a test\n"
        "t,participant_id,trip_id,segment_id,road_class,speed_mph,lon,lat,posted_limit_mph\n"
        "7,P2,T4,S1,other,30.25,-93,41,\n"
        "# trailing comment\n");
    ParsedDrive d = parse_drive_records(in, DriveFormat::csv);
    REQUIRE(d.points.size() == 1);
    CHECK(d.points[0].t == 7);
    CHECK(d.points[0].participant_id == "P2");
    CHECK(d.points[0].road_class == RoadClass::other);
    CHECK(d.issues.empty());
}

TEST_CASE("jsonl rows parse with the same validation") {
    std::istringstream in(
        R"({"participant_id":"P1","trip_id":"T1","t":3,"lat":41.5,"lon":-93.0,"speed_mph":71.5,"road_class":"interstate","segment_id":"S9","posted_limit_mph":75})"
        "\n"
        R"({"participant_id":"P1","trip_id":"T1","t":4,"lat":"oops","lon":-93.0,"speed_mph":71.5,"road_class":"interstate","segment_id":"S9"})"
        "\n"
        "this is not json\n");
    ParsedDrive d = parse_drive_records(in, DriveFormat::jsonl);
    REQUIRE(d.points.size() == 1);
    CHECK(d.points[0].speed_mph == 71.5);
    REQUIRE(d.issues.size() == 2);
    CHECK(d.issues[0].line == 2);
    CHECK(d.issues[0].column == "lat");
    CHECK(d.issues[1].line == 3);
}

TEST_CASE("roster parses ages into cohorts at the given threshold") {
    std::istringstream in(
        "participant_id,age,sex\n"
        "S01,71,female\n"
        "Y01,23,male\n"
        "E01,65,\n");
    RosterParse r = parse_roster(in, 65);
    REQUIRE(r.participants.size() == 3);
    CHECK(r.participants.at("S01").cohort == Cohort::senior);
    CHECK(r.participants.at("Y01").cohort == Cohort::young);
    CHECK(r.participants.at("E01").cohort == Cohort::senior);
    CHECK(r.participants.at("E01").sex == Sex::unspecified);
    CHECK(r.issues.empty());
}

TEST_CASE("roster rejects duplicates fatally and bad rows as issues") {
    std::istringstream dup(
        "participant_id,age,sex\n"
        "P1,44,male\n"
        "P1,45,male\n");
    CHECK_THROWS_AS(parse_roster(dup, 65), ValidationError);

    std::istringstream bad(
        "participant_id,age,sex\n"
        "P1,15,male\n"
        "P2,not_a_number,male\n"
        "P3,30,confused\n");
    RosterParse r = parse_roster(bad, 65);
    CHECK(r.participants.empty());
    REQUIRE(r.issues.size() == 3);
    CHECK(r.issues[0].column == "age");
    CHECK(r.issues[2].column == "sex");
}

TEST_CASE("clean drops rows missing gps or speed and balances") {
    std::vector<DrivePoint> pts = {
        make_point("P1", "T1", 0, 70),
        make_point("P1", "T1", 1, 71),
        make_point("P1", "T1", 2, 72),
    };
    pts[1].lon.reset();
    CleanResult c = clean(pts);
    CHECK(c.points.size() == 2);
    CHECK(c.report.rows_in == 3);
    CHECK(c.report.rows_dropped_missing == 1);
    CHECK(c.report.dropped_by_reason.at("missing_gps") == 1);
    CHECK(c.report.balanced());

    // identity when everything is present
    CleanResult id = clean(c.points);
    CHECK(id.points.size() == 2);
    CHECK(id.report.rows_dropped_missing == 0);
    CHECK(id.report.balanced());

    // total rejection when speed is gone everywhere
    for (auto& p : pts) p.speed_mph.reset();
    CleanResult none = clean(pts);
    CHECK(none.points.empty());
    CHECK(none.report.rows_dropped_missing == none.report.rows_in);
    CHECK(none.report.balanced());
}

TEST_CASE("clean is idempotent") {
    std::vector<DrivePoint> pts;
    for (int i = 0; i < 20; ++i) {
        DrivePoint p = make_point("P1", "T1", i, 60.0 + i);
        if (i % 3 == 0) p.lat.reset();
        if (i % 7 == 0) p.speed_mph.reset();
        pts.push_back(p);
    }
    CleanResult once = clean(pts);
    CleanResult twice = clean(once.points);
    REQUIRE(twice.points.size() == once.points.size());
    CHECK(twice.report.rows_dropped_missing == 0);
    for (std::size_t i = 0; i < once.points.size(); ++i) {
        CHECK(twice.points[i].t == once.points[i].t);
    }
}

TEST_CASE("filter_select applies road class, limit, and sufficiency rules") {
    std::vector<DrivePoint> pts;
    // S1: two participants, generous points at 75 mph
    for (int i = 0; i < 5; ++i) pts.push_back(make_point("P1", "T1", i, 70, "S1", 75));
    for (int i = 0; i < 5; ++i) pts.push_back(make_point("P2", "T2", i, 72, "S1", 75));
    // S2: single participant (insufficient when min_participants = 2)
    for (int i = 0; i < 5; ++i) pts.push_back(make_point("P1", "T3", i, 71, "S2", 75));
    // below the limit threshold
    pts.push_back(make_point("P1", "T1", 10, 55, "S1", 60));
    // wrong road class
    DrivePoint side = make_point("P1", "T1", 11, 40, "S1", 75);
    side.road_class = RoadClass::other;
    pts.push_back(side);
    // missing posted limit
    pts.push_back(make_point("P1", "T1", 12, 66, "S1", std::nullopt));

    FilterResult f = filter_select(pts, 65, RoadClass::interstate, 1, 2);
    CHECK(f.points.size() == 10);
    CHECK(f.dropped_by_reason.at("below_min_limit") == 1);
    CHECK(f.dropped_by_reason.at("road_class") == 1);
    CHECK(f.dropped_by_reason.at("absent_posted_limit") == 1);
    CHECK(f.dropped_by_reason.at("segment_insufficient") == 5);
    REQUIRE(f.summaries.size() == 1);
    CHECK(f.summaries[0].segment_id == "S1");
    CHECK(f.summaries[0].n_points == 10);
    CHECK(f.summaries[0].n_participants == 2);
    CHECK(f.summaries[0].posted_limit_mph == 75.0);

    // identity case: everything interstate at 75, thresholds 1/1
    std::vector<DrivePoint> easy;
    for (int i = 0; i < 4; ++i) easy.push_back(make_point("P1", "T1", i, 70, "S1", 75));
    FilterResult all = filter_select(easy, 65, RoadClass::interstate, 1, 1);
    CHECK(all.points.size() == easy.size());
    CHECK(all.rows_dropped() == 0);
}

TEST_CASE("filter_select is a fixpoint under reapplication") {
    std::vector<DrivePoint> pts;
    for (int i = 0; i < 30; ++i) {
        pts.push_back(make_point("P" + std::to_string(i % 4), "T1", i, 70,
                                 "S" + std::to_string(i % 3), i % 2 ? 75.0 : 60.0));
    }
    FilterResult once = filter_select(pts, 65, RoadClass::interstate, 2, 2);
    FilterResult twice = filter_select(once.points, 65, RoadClass::interstate, 2, 2);
    REQUIRE(twice.points.size() == once.points.size());
    CHECK(twice.rows_dropped() == 0);
}

TEST_CASE("filter_select reports the modal limit, ties to the larger") {
    std::vector<DrivePoint> pts;
    pts.push_back(make_point("P1", "T1", 0, 70, "S1", 70));
    pts.push_back(make_point("P2", "T1", 1, 70, "S1", 70));
    pts.push_back(make_point("P1", "T1", 2, 70, "S1", 75));
    pts.push_back(make_point("P2", "T1", 3, 70, "S1", 75));
    FilterResult f = filter_select(pts, 65, RoadClass::interstate, 1, 1);
    REQUIRE(f.summaries.size() == 1);
    CHECK(f.summaries[0].posted_limit_mph == 75.0);
}

TEST_CASE("filter_select splits cohort counts when a roster is supplied") {
    Roster roster;
    Participant senior{.participant_id = "S1", .age = 70, .sex = Sex::female,
                       .cohort = Cohort::senior};
    Participant young{.participant_id = "Y1", .age = 25, .sex = Sex::male,
                      .cohort = Cohort::young};
    roster.emplace("S1", senior);
    roster.emplace("Y1", young);

    std::vector<DrivePoint> pts;
    for (int i = 0; i < 3; ++i) pts.push_back(make_point("S1", "T1", i, 70));
    for (int i = 0; i < 2; ++i) pts.push_back(make_point("Y1", "T2", i, 74));
    FilterResult f = filter_select(pts, 65, RoadClass::interstate, 1, 1, &roster);
    REQUIRE(f.summaries.size() == 1);
    CHECK(f.summaries[0].n_senior_participants == 1);
    CHECK(f.summaries[0].n_young_participants == 1);
    CHECK(f.summaries[0].n_senior_points == 3);
    CHECK(f.summaries[0].n_young_points == 2);

    pts.push_back(make_point("GHOST", "T9", 0, 70));
    CHECK_THROWS_AS(filter_select(pts, 65, RoadClass::interstate, 1, 1, &roster),
                    ValidationError);
}

TEST_CASE("assign_cohort boundary behavior") {
    CHECK(assign_cohort(65, 65) == Cohort::senior);
    CHECK(assign_cohort(64, 65) == Cohort::young);
    CHECK(assign_cohort(21, 65) == Cohort::young);
    CHECK(assign_cohort(99, 65) == Cohort::senior);
    CHECK_THROWS_AS(assign_cohort(15, 65), ValidationError);

    // monotone in age
    bool seen_senior = false;
    for (int age = 16; age <= 100; ++age) {
        const bool senior = assign_cohort(age, 65) == Cohort::senior;
        if (seen_senior) CHECK(senior);
        seen_senior = seen_senior || senior;
    }
    CHECK(seen_senior);
}

TEST_CASE("assemble_trips groups and sorts, rejecting duplicate timestamps") {
    std::vector<DrivePoint> pts = {
        make_point("P1", "T1", 5, 70),
        make_point("P1", "T2", 0, 71),
        make_point("P1", "T1", 2, 72),
        make_point("P2", "T1", 9, 73),
    };
    auto trips = assemble_trips(pts);
    REQUIRE(trips.size() == 3);
    CHECK(trips[0][0].t == 2);  // (P1,T1) sorted
    CHECK(trips[0][1].t == 5);
    CHECK(trips[1][0].trip_id == "T2");
    CHECK(trips[2][0].participant_id == "P2");

    pts.push_back(make_point("P1", "T1", 5, 74));
    CHECK_THROWS_AS(assemble_trips(pts), ValidationError);
}

TEST_CASE("drive_csv and roster_csv round-trip through their parsers") {
    std::vector<DrivePoint> pts = {
        make_point("P1", "T1", 0, 71.5),
        make_point("P1", "T1", 1, 72.25),
    };
    pts[1].accel_ftps2 = -1.5;
    std::istringstream in(drive_csv(pts));
    ParsedDrive d = parse_drive_records(in, DriveFormat::csv);
    REQUIRE(d.issues.empty());
    REQUIRE(d.points.size() == 2);
    CHECK(d.points[0].speed_mph == 71.5);
    CHECK(d.points[1].accel_ftps2 == -1.5);
    CHECK(d.points[1].segment_id == "S1");

    std::vector<Participant> people = {
        {.participant_id = "S01", .age = 71, .sex = Sex::female, .cohort = Cohort::senior},
        {.participant_id = "Y01", .age = 23, .sex = Sex::male, .cohort = Cohort::young},
    };
    std::istringstream rin(roster_csv(people));
    RosterParse r = parse_roster(rin, 65);
    REQUIRE(r.participants.size() == 2);
    CHECK(r.participants.at("S01").age == 71);
    CHECK(r.participants.at("S01").cohort == Cohort::senior);
}
