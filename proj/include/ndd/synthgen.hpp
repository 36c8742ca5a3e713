#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ndd/geo.hpp"
#include "ndd/telemetry.hpp"

namespace ndd {

// Normal deviates from a named, portable engine. mt19937_64 output is
// pinned by the standard, so the same seed gives the same stream on every
// platform; Box-Muller is done by hand to avoid the
// implementation-defined std::normal_distribution.
class NormalSampler {
public:
    explicit NormalSampler(std::uint64_t seed) : eng_(seed) {}

    // Uniform in (0, 1], 53-bit resolution. Never 0, so log() is safe.
    double uniform01();

    double normal(double mean, double sd);

    // Resamples until the draw reaches min_value. Throws after 10000
    // rejections (the spec's mean is implausibly far below the floor).
    double truncated_normal(double mean, double sd, double min_value);

    // Uniform integer in [lo, hi] via modulo (bias is irrelevant here and
    // the result is portable, unlike std::uniform_int_distribution).
    int uniform_int(int lo, int hi);

private:
    std::mt19937_64 eng_;
};

struct SegmentSpec {
    std::string segment_id;
    double posted_limit_mph = 0.0;
};

struct CohortSpec {
    Cohort cohort = Cohort::senior;
    std::string id_prefix;        // participant ids: <prefix><zero-padded index>
    int n_participants = 0;
    int trips_per_participant = 0;
    int points_per_trip = 0;
    double speed_mean_mph = 0.0;  // truncated normal, floor 0
    double speed_sd_mph = 0.0;
    double decel_mean_ftps2 = 0.0;  // magnitude of per-second speed loss
    double decel_sd_ftps2 = 0.0;
    int age_min = 0;
    int age_max = 0;
    std::vector<SegmentSpec> segments;
    std::uint64_t seed = 0;
};

void validate_spec(const CohortSpec& spec);

// Ages drawn uniformly from [age_min, age_max]; the whole range must land
// in the spec's cohort for the given threshold. Uses a salted stream so
// roster draws never shift the trace streams.
std::vector<Participant> generate_roster(const CohortSpec& spec,
                                         int senior_age_threshold);

// Cruise traces on the spec's interstate segments, one segment per trip
// (round robin), points 1 s apart, speeds iid from the cohort's truncated
// normal. Exactly n_participants * trips_per_participant * points_per_trip
// points, deterministic per seed.
std::vector<DrivePoint> generate_speed_traces(const CohortSpec& spec);

// Straight-line stop approaches: each trip decelerates along a meridian
// into one intersection (round robin), shedding a freshly drawn
// deceleration magnitude each second until it stops exactly at the center.
// Final speed is 0, so every approach ends at or below any v_stop >= 0.
std::vector<DrivePoint> generate_stop_approaches(
    const CohortSpec& spec, std::span<const StopIntersection> intersections);

}  // namespace ndd
