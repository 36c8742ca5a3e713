#include "ndd/config.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <set>

#include "ndd/error.hpp"
#include "ndd/util.hpp"

namespace ndd {

namespace {

void reject(const std::string& key, const std::string& why) {
    throw ValidationError("config key '" + key + "' " + why);
}

void check_unit_interval(const std::string& key, double v, bool allow_one) {
    if (!std::isfinite(v) || v <= 0.0 || v > 1.0 || (!allow_one && v == 1.0)) {
        reject(key, allow_one ? "must be in (0, 1]" : "must be in (0, 1)");
    }
}

using Setter = std::function<void(PipelineConfig&, const std::string& key,
                                  const std::string& value)>;

double as_double(const std::string& key, const std::string& value) {
    auto v = parse_double(value);
    if (!v) reject(key, "is not a number: '" + value + "'");
    return *v;
}

int as_int(const std::string& key, const std::string& value) {
    auto v = parse_i64(value);
    if (!v) reject(key, "is not an integer: '" + value + "'");
    if (*v < -1000000000 || *v > 1000000000) reject(key, "is out of range");
    return static_cast<int>(*v);
}

bool as_bool(const std::string& key, const std::string& value) {
    if (value == "0") return false;
    if (value == "1") return true;
    reject(key, "must be 0 or 1");
    return false;  // unreachable
}

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"tau_segment",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.tau_segment = as_double(k, v);
         }},
        {"tau_participant",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.tau_participant = as_double(k, v);
         }},
        {"max_iter",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.max_iter = as_int(k, v);
         }},
        {"buffer_radius_m",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.buffer_radius_m = as_double(k, v);
         }},
        {"v_stop_mph",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.v_stop_mph = as_double(k, v);
         }},
        {"min_width",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.min_width = as_int(k, v);
         }},
        {"grid_step",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.grid_step = as_int(k, v);
         }},
        {"min_points_per_segment",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.min_points_per_segment = as_int(k, v);
         }},
        {"min_participants_per_segment",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.min_participants_per_segment = as_int(k, v);
         }},
        {"senior_age_threshold",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.senior_age_threshold = as_int(k, v);
         }},
        {"alpha",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.alpha = as_double(k, v);
         }},
        {"min_posted_limit_mph",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.min_posted_limit_mph = as_double(k, v);
         }},
        {"screen_validation",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.screen_validation = as_bool(k, v);
         }},
        {"screen_tau",
         [](PipelineConfig& c, const std::string& k, const std::string& v) {
             c.screen_tau = as_double(k, v);
         }},
    };
    return table;
}

}  // namespace

void validate_config(const PipelineConfig& c) {
    check_unit_interval("tau_segment", c.tau_segment, true);
    check_unit_interval("tau_participant", c.tau_participant, true);
    check_unit_interval("screen_tau", c.screen_tau, true);
    check_unit_interval("alpha", c.alpha, false);
    if (c.max_iter < 1) reject("max_iter", "must be >= 1");
    if (!std::isfinite(c.buffer_radius_m) || c.buffer_radius_m <= 0.0) {
        reject("buffer_radius_m", "must be positive");
    }
    if (!std::isfinite(c.v_stop_mph) || c.v_stop_mph < 0.0) {
        reject("v_stop_mph", "must be >= 0");
    }
    if (c.min_width < 1 || c.min_width > 98) {
        reject("min_width", "must be in [1, 98]");
    }
    if (c.grid_step < 1) reject("grid_step", "must be >= 1");
    if (c.min_points_per_segment < 1) {
        reject("min_points_per_segment", "must be >= 1");
    }
    if (c.min_participants_per_segment < 1) {
        reject("min_participants_per_segment", "must be >= 1");
    }
    if (c.senior_age_threshold < 16) {
        reject("senior_age_threshold", "must be >= 16");
    }
    if (!std::isfinite(c.min_posted_limit_mph) || c.min_posted_limit_mph < 0.0) {
        reject("min_posted_limit_mph", "must be >= 0");
    }
}

PipelineConfig load_config(std::istream& in) {
    if (!in.good()) {
        throw IoError("cannot read config");
    }
    PipelineConfig config;
    std::set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string text(trim(line));
        if (text.empty() || text[0] == '#') continue;
        std::size_t eq = text.find('=');
        if (eq == std::string::npos) {
            throw ValidationError("config line " + std::to_string(line_no) +
                                  ": expected key=value, got '" + text + "'");
        }
        std::string key(trim(std::string_view(text).substr(0, eq)));
        std::string value(trim(std::string_view(text).substr(eq + 1)));
        auto it = setters().find(key);
        if (it == setters().end()) {
            throw ValidationError("unknown config key '" + key + "'");
        }
        if (!seen.insert(key).second) {
            throw ValidationError("duplicate config key '" + key + "'");
        }
        it->second(config, key, value);
    }
    validate_config(config);
    return config;
}

std::string config_echo(const PipelineConfig& c) {
    std::string out;
    auto add = [&out](const std::string& key, const std::string& value) {
        out += "# ";
        out += key;
        out += '=';
        out += value;
        out += '\n';
    };
    add("tau_segment", fmt_double(c.tau_segment));
    add("tau_participant", fmt_double(c.tau_participant));
    add("max_iter", std::to_string(c.max_iter));
    add("buffer_radius_m", fmt_double(c.buffer_radius_m));
    add("v_stop_mph", fmt_double(c.v_stop_mph));
    add("min_width", std::to_string(c.min_width));
    add("grid_step", std::to_string(c.grid_step));
    add("min_points_per_segment", std::to_string(c.min_points_per_segment));
    add("min_participants_per_segment",
        std::to_string(c.min_participants_per_segment));
    add("senior_age_threshold", std::to_string(c.senior_age_threshold));
    add("alpha", fmt_double(c.alpha));
    add("min_posted_limit_mph", fmt_double(c.min_posted_limit_mph));
    add("screen_validation", c.screen_validation ? "1" : "0");
    add("screen_tau", fmt_double(c.screen_tau));
    return out;
}

}  // namespace ndd
