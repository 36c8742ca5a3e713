#pragma once

#include <istream>
#include <span>
#include <string>
#include <vector>

#include "ndd/telemetry.hpp"

namespace ndd {

// Mean-radius sphere used for all great-circle math, in meters.
inline constexpr double kEarthRadiusM = 6'371'000.0;

// 1 mph = 5280/3600 ft/s.
inline constexpr double kFtpsPerMph = 5280.0 / 3600.0;

inline double mph_to_ftps(double mph) { return mph * kFtpsPerMph; }

// 1 mph = 1609.344/3600 m/s.
inline constexpr double kMpsPerMph = 1609.344 / 3600.0;

struct StopIntersection {
    std::string intersection_id;
    double lat = 0.0;
    double lon = 0.0;
    double buffer_radius_m = 0.0;
};

// Stops CSV: intersection_id, lat, lon, radius_m (optional; the default fills
// absent values). Reference data is held to a stricter standard than bulk
// telemetry: any malformed row is fatal, as is a duplicate intersection_id.
std::vector<StopIntersection> load_stop_intersections(std::istream& in,
                                                      double default_radius_m);

// Great-circle distance (haversine) on the mean-radius sphere. Symmetric,
// non-negative, zero iff the coordinates are identical. Throws on
// out-of-bounds coordinates.
double geodesic_distance(double lat1, double lon1, double lat2, double lon2);

// The in-buffer portion of one trip at one stop intersection, from buffer
// entry to the first near-stop point (or buffer exit). Always >= 2 points
// with strictly increasing t.
struct ApproachTrace {
    std::string participant_id;
    std::string trip_id;
    std::string intersection_id;
    std::vector<DrivePoint> points;
};

// For each (trip, intersection) pair, each maximal contiguous run of points
// within buffer_radius_m of the center yields at most one trace: the run is
// cut at the first point with speed <= v_stop_mph, or kept whole if the trip
// never slows to v_stop inside the buffer. Runs (or cuts) shorter than two
// points are discarded. Trips must be cleaned and time-ordered.
std::vector<ApproachTrace> extract_approach_traces(
    std::span<const std::vector<DrivePoint>> trips,
    std::span<const StopIntersection> intersections,
    double v_stop_mph);

// One consecutive-pair speed step: a = (v2 - v1) / dt with speeds in ft/s.
struct DecelEvent {
    std::string participant_id;
    std::string intersection_id;
    std::int64_t t_start = 0;
    double dt = 0.0;      // seconds
    double v1 = 0.0;      // ft/s
    double v2 = 0.0;      // ft/s
    double a = 0.0;       // ft/s^2, signed
};

// All consecutive-pair steps of a trace, signed. Over a whole trace the
// steps telescope: sum(a_i * dt_i) == v_last - v_first in ft/s. Throws on
// traces shorter than two points or non-increasing timestamps.
std::vector<DecelEvent> compute_steps(const ApproachTrace& trace);

// Only the steps with a < 0. These are the deceleration events whose
// magnitudes |a| feed the stop-deceleration KPI.
std::vector<DecelEvent> compute_deceleration(const ApproachTrace& trace);

}  // namespace ndd
