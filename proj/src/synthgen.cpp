#include "ndd/synthgen.hpp"

#include <cmath>

#include "ndd/error.hpp"
#include "ndd/util.hpp"

namespace ndd {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

// Distinct streams per output so adding one never reseeds another.
constexpr std::uint64_t kRosterSalt = 0x726f737465720000ULL;
constexpr std::uint64_t kStopSalt = 0x73746f7073000000ULL;

std::string pad_index(int index, int total) {
    int width = 1;
    for (int v = total; v >= 10; v /= 10) ++width;
    std::string digits = std::to_string(index);
    return std::string(width > static_cast<int>(digits.size())
                           ? width - digits.size()
                           : 0,
                       '0') +
           digits;
}

}  // namespace

double NormalSampler::uniform01() {
    return static_cast<double>((eng_() >> 11) + 1) * 0x1.0p-53;
}

double NormalSampler::normal(double mean, double sd) {
    double u1 = uniform01();
    double u2 = uniform01();
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    return mean + sd * z;
}

double NormalSampler::truncated_normal(double mean, double sd,
                                       double min_value) {
    for (int tries = 0; tries < 10000; ++tries) {
        double x = normal(mean, sd);
        if (x >= min_value) return x;
    }
    throw ValidationError("truncated normal rejected 10000 draws (mean " +
                          fmt_double(mean) + ", sd " + fmt_double(sd) +
                          ", min " + fmt_double(min_value) + ")");
}

int NormalSampler::uniform_int(int lo, int hi) {
    if (lo > hi) {
        throw ValidationError("uniform_int needs lo <= hi");
    }
    std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(eng_() % span);
}

void validate_spec(const CohortSpec& spec) {
    if (spec.id_prefix.empty()) {
        throw ValidationError("cohort spec needs an id prefix");
    }
    if (spec.n_participants < 1 || spec.trips_per_participant < 1 ||
        spec.points_per_trip < 1) {
        throw ValidationError("cohort spec counts must be >= 1");
    }
    if (!std::isfinite(spec.speed_mean_mph) || spec.speed_mean_mph <= 0.0) {
        throw ValidationError("speed mean must be positive");
    }
    if (!std::isfinite(spec.speed_sd_mph) || spec.speed_sd_mph < 0.0) {
        throw ValidationError("speed sd must be >= 0");
    }
    if (!std::isfinite(spec.decel_mean_ftps2) || spec.decel_mean_ftps2 <= 0.0) {
        throw ValidationError("deceleration mean must be positive");
    }
    if (!std::isfinite(spec.decel_sd_ftps2) || spec.decel_sd_ftps2 < 0.0) {
        throw ValidationError("deceleration sd must be >= 0");
    }
    if (spec.age_min < 16 || spec.age_min > spec.age_max) {
        throw ValidationError("cohort spec needs 16 <= age_min <= age_max");
    }
    // Segments are only needed for speed traces; stop approaches carry their
    // own layout, so an empty list is fine here.
    for (const auto& seg : spec.segments) {
        if (seg.segment_id.empty()) {
            throw ValidationError("segment spec needs an id");
        }
        if (!std::isfinite(seg.posted_limit_mph) ||
            seg.posted_limit_mph <= 0.0) {
            throw ValidationError("segment posted limit must be positive");
        }
    }
}

std::vector<Participant> generate_roster(const CohortSpec& spec,
                                         int senior_age_threshold) {
    validate_spec(spec);
    NormalSampler rng(spec.seed ^ kRosterSalt);
    std::vector<Participant> roster;
    roster.reserve(static_cast<std::size_t>(spec.n_participants));
    for (int k = 0; k < spec.n_participants; ++k) {
        Participant p;
        p.participant_id = spec.id_prefix + pad_index(k + 1, spec.n_participants);
        p.age = rng.uniform_int(spec.age_min, spec.age_max);
        p.sex = k % 2 == 0 ? Sex::female : Sex::male;
        p.cohort = assign_cohort(p.age, senior_age_threshold);
        if (p.cohort != spec.cohort) {
            throw ValidationError("age range [" + std::to_string(spec.age_min) +
                                  ", " + std::to_string(spec.age_max) +
                                  "] crosses the senior threshold " +
                                  std::to_string(senior_age_threshold));
        }
        roster.push_back(std::move(p));
    }
    return roster;
}

std::vector<DrivePoint> generate_speed_traces(const CohortSpec& spec) {
    validate_spec(spec);
    if (spec.segments.empty()) {
        throw ValidationError("speed traces need at least one segment");
    }
    NormalSampler rng(spec.seed);

    std::vector<DrivePoint> out;
    out.reserve(static_cast<std::size_t>(spec.n_participants) *
                spec.trips_per_participant * spec.points_per_trip);
    int trip_counter = 0;
    for (int k = 0; k < spec.n_participants; ++k) {
        std::string pid = spec.id_prefix + pad_index(k + 1, spec.n_participants);
        for (int j = 0; j < spec.trips_per_participant; ++j, ++trip_counter) {
            const SegmentSpec& seg =
                spec.segments[static_cast<std::size_t>(trip_counter) %
                              spec.segments.size()];
            std::string trip_id = "T" + pad_index(j + 1, spec.trips_per_participant);
            for (int i = 0; i < spec.points_per_trip; ++i) {
                DrivePoint p;
                p.participant_id = pid;
                p.trip_id = trip_id;
                p.t = i;
                p.lat = 1e-4 * i;
                p.lon = 0.01 * static_cast<double>(
                                   static_cast<std::size_t>(trip_counter) %
                                   spec.segments.size());
                p.speed_mph =
                    rng.truncated_normal(spec.speed_mean_mph, spec.speed_sd_mph,
                                         0.0);
                p.road_class = RoadClass::interstate;
                p.segment_id = seg.segment_id;
                p.posted_limit_mph = seg.posted_limit_mph;
                out.push_back(std::move(p));
            }
        }
    }
    return out;
}

std::vector<DrivePoint> generate_stop_approaches(
    const CohortSpec& spec, std::span<const StopIntersection> intersections) {
    validate_spec(spec);
    if (intersections.empty()) {
        throw ValidationError("stop approaches need at least one intersection");
    }
    NormalSampler rng(spec.seed ^ kStopSalt);
    const double meters_per_deg_lat = kEarthRadiusM * kPi / 180.0;

    std::vector<DrivePoint> out;
    int trip_counter = 0;
    for (int k = 0; k < spec.n_participants; ++k) {
        std::string pid = spec.id_prefix + pad_index(k + 1, spec.n_participants);
        for (int j = 0; j < spec.trips_per_participant; ++j, ++trip_counter) {
            const StopIntersection& stop =
                intersections[static_cast<std::size_t>(trip_counter) %
                              intersections.size()];
            std::string trip_id =
                "A" + pad_index(j + 1, spec.trips_per_participant);

            // Speeds in ft/s, one per second, losing one drawn deceleration
            // magnitude per step until the vehicle stops.
            std::vector<double> speeds_ftps;
            speeds_ftps.push_back(mph_to_ftps(
                rng.truncated_normal(spec.speed_mean_mph, spec.speed_sd_mph,
                                     10.0)));
            while (speeds_ftps.back() > 0.0) {
                double drop =
                    rng.truncated_normal(spec.decel_mean_ftps2,
                                         spec.decel_sd_ftps2, 0.1);
                double v = speeds_ftps.back() - drop;
                speeds_ftps.push_back(v > 0.0 ? v : 0.0);
            }

            // Walk the distances backward from the intersection center so
            // the last point sits exactly on it. Step length is the
            // trapezoidal displacement over one second.
            std::size_t n = speeds_ftps.size();
            std::vector<double> dist_to_center(n, 0.0);
            for (std::size_t i = n - 1; i-- > 0;) {
                double v_avg_mph =
                    (speeds_ftps[i] + speeds_ftps[i + 1]) / (2.0 * kFtpsPerMph);
                dist_to_center[i] =
                    dist_to_center[i + 1] + v_avg_mph * kMpsPerMph;
            }

            for (std::size_t i = 0; i < n; ++i) {
                DrivePoint p;
                p.participant_id = pid;
                p.trip_id = trip_id;
                p.t = static_cast<std::int64_t>(i);
                p.lat = stop.lat - dist_to_center[i] / meters_per_deg_lat;
                p.lon = stop.lon;
                p.speed_mph = speeds_ftps[i] / kFtpsPerMph;
                p.road_class = RoadClass::other;
                p.segment_id = "stop:" + stop.intersection_id;
                out.push_back(std::move(p));
            }
        }
    }
    return out;
}

}  // namespace ndd
