#include "ndd/geo.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ndd/error.hpp"
#include "ndd/util.hpp"

namespace ndd {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

double deg_to_rad(double deg) { return deg * (kPi / 180.0); }

void check_coord(double lat, double lon, const std::string& what) {
    if (!std::isfinite(lat) || lat < -90.0 || lat > 90.0) {
        throw ValidationError(what + ": latitude out of range: " + fmt_double(lat));
    }
    if (!std::isfinite(lon) || lon < -180.0 || lon > 180.0) {
        throw ValidationError(what + ": longitude out of range: " + fmt_double(lon));
    }
}

}  // namespace

std::vector<StopIntersection> load_stop_intersections(std::istream& in,
                                                      double default_radius_m) {
    if (!in.good()) {
        throw IoError("cannot read stop intersections");
    }
    if (!(default_radius_m > 0.0) || !std::isfinite(default_radius_m)) {
        throw ValidationError("default buffer radius must be positive");
    }

    std::string line;
    std::size_t line_no = 0;

    // Header row is required, column order fixed.
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        break;
    }
    std::vector<std::string> header = split_csv(line);
    const char* expected[] = {"intersection_id", "lat", "lon"};
    if (header.size() < 3 || header.size() > 4) {
        throw ValidationError("stops header must have 3 or 4 columns");
    }
    for (std::size_t i = 0; i < 3; ++i) {
        if (trim(header[i]) != expected[i]) {
            throw ValidationError("stops header: expected column '" +
                                  std::string(expected[i]) + "', got '" +
                                  header[i] + "'");
        }
    }
    bool has_radius = header.size() == 4;
    if (has_radius && trim(header[3]) != "radius_m") {
        throw ValidationError("stops header: expected column 'radius_m', got '" +
                              header[3] + "'");
    }

    std::vector<StopIntersection> out;
    std::set<std::string> seen;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells = split_csv(line);
        if (cells.size() != header.size()) {
            throw ValidationError("stops line " + std::to_string(line_no) +
                                  ": expected " + std::to_string(header.size()) +
                                  " columns, got " + std::to_string(cells.size()));
        }
        const std::string where = "stops line " + std::to_string(line_no);
        StopIntersection s;
        s.intersection_id = trim(cells[0]);
        if (s.intersection_id.empty()) {
            throw ValidationError(where + ": empty intersection_id");
        }
        if (!seen.insert(s.intersection_id).second) {
            throw ValidationError(where + ": duplicate intersection_id '" +
                                  s.intersection_id + "'");
        }
        s.lat = require_double(trim(cells[1]), where + " lat");
        s.lon = require_double(trim(cells[2]), where + " lon");
        check_coord(s.lat, s.lon, where);
        s.buffer_radius_m = default_radius_m;
        if (has_radius) {
            std::string_view r = trim(cells[3]);
            if (!r.empty()) {
                double v = require_double(r, where + " radius_m");
                if (!(v > 0.0) || !std::isfinite(v)) {
                    throw ValidationError(where + ": radius_m must be positive");
                }
                s.buffer_radius_m = v;
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

double geodesic_distance(double lat1, double lon1, double lat2, double lon2) {
    check_coord(lat1, lon1, "geodesic_distance point a");
    check_coord(lat2, lon2, "geodesic_distance point b");
    if (lat1 == lat2 && lon1 == lon2) return 0.0;

    double phi1 = deg_to_rad(lat1);
    double phi2 = deg_to_rad(lat2);
    double dphi = deg_to_rad(lat2 - lat1);
    double dlam = deg_to_rad(lon2 - lon1);

    double sp = std::sin(dphi / 2.0);
    double sl = std::sin(dlam / 2.0);
    double h = sp * sp + std::cos(phi1) * std::cos(phi2) * sl * sl;
    h = std::clamp(h, 0.0, 1.0);
    return 2.0 * kEarthRadiusM * std::asin(std::sqrt(h));
}

std::vector<ApproachTrace> extract_approach_traces(
    std::span<const std::vector<DrivePoint>> trips,
    std::span<const StopIntersection> intersections,
    double v_stop_mph) {
    if (!std::isfinite(v_stop_mph) || v_stop_mph < 0.0) {
        throw ValidationError("v_stop must be non-negative");
    }

    std::vector<ApproachTrace> out;
    for (const auto& trip : trips) {
        for (const auto& p : trip) {
            if (!p.lat || !p.lon || !p.speed_mph) {
                throw ValidationError(
                    "extract_approach_traces requires cleaned points "
                    "(participant " + p.participant_id + ", trip " + p.trip_id +
                    ")");
            }
        }
        for (const auto& s : intersections) {
            // Maximal contiguous in-buffer runs; each yields at most one trace.
            std::size_t i = 0;
            while (i < trip.size()) {
                double d = geodesic_distance(*trip[i].lat, *trip[i].lon, s.lat,
                                             s.lon);
                if (d > s.buffer_radius_m) {
                    ++i;
                    continue;
                }
                std::size_t j = i;
                while (j < trip.size() &&
                       geodesic_distance(*trip[j].lat, *trip[j].lon, s.lat,
                                         s.lon) <= s.buffer_radius_m) {
                    ++j;
                }
                // [i, j) is in-buffer. Cut at the first near-stop point,
                // keeping it as the endpoint.
                std::size_t end = j;
                for (std::size_t k = i; k < j; ++k) {
                    if (*trip[k].speed_mph <= v_stop_mph) {
                        end = k + 1;
                        break;
                    }
                }
                if (end - i >= 2) {
                    ApproachTrace tr;
                    tr.participant_id = trip[i].participant_id;
                    tr.trip_id = trip[i].trip_id;
                    tr.intersection_id = s.intersection_id;
                    tr.points.assign(trip.begin() + static_cast<std::ptrdiff_t>(i),
                                     trip.begin() + static_cast<std::ptrdiff_t>(end));
                    out.push_back(std::move(tr));
                }
                i = j;
            }
        }
    }
    return out;
}

std::vector<DecelEvent> compute_steps(const ApproachTrace& trace) {
    if (trace.points.size() < 2) {
        throw ValidationError("approach trace needs at least 2 points");
    }
    std::vector<DecelEvent> out;
    out.reserve(trace.points.size() - 1);
    for (std::size_t i = 0; i + 1 < trace.points.size(); ++i) {
        const DrivePoint& a = trace.points[i];
        const DrivePoint& b = trace.points[i + 1];
        if (b.t <= a.t) {
            throw ValidationError("approach trace timestamps must increase "
                                  "(participant " + trace.participant_id +
                                  ", trip " + trace.trip_id + ")");
        }
        if (!a.speed_mph || !b.speed_mph) {
            throw ValidationError("approach trace has missing speed");
        }
        DecelEvent e;
        e.participant_id = trace.participant_id;
        e.intersection_id = trace.intersection_id;
        e.t_start = a.t;
        e.dt = static_cast<double>(b.t - a.t);
        e.v1 = mph_to_ftps(*a.speed_mph);
        e.v2 = mph_to_ftps(*b.speed_mph);
        e.a = (e.v2 - e.v1) / e.dt;
        out.push_back(e);
    }
    return out;
}

std::vector<DecelEvent> compute_deceleration(const ApproachTrace& trace) {
    std::vector<DecelEvent> steps = compute_steps(trace);
    std::erase_if(steps, [](const DecelEvent& e) { return !(e.a < 0.0); });
    return steps;
}

}  // namespace ndd
