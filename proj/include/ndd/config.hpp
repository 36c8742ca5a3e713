#pragma once

#include <istream>
#include <string>

namespace ndd {

// Every tunable of the pipeline, with the documented defaults. Loaded from
// a flat key=value file; out-of-bounds values are rejected at load time
// with the offending key named.
struct PipelineConfig {
    double tau_segment = 0.25;
    double tau_participant = 0.25;
    int max_iter = 10;
    double buffer_radius_m = 60.0;
    double v_stop_mph = 5.0;
    int min_width = 10;
    int grid_step = 1;
    int min_points_per_segment = 200;
    int min_participants_per_segment = 3;
    int senior_age_threshold = 65;
    double alpha = 0.05;
    double min_posted_limit_mph = 65.0;
    bool screen_validation = true;
    double screen_tau = 0.25;

    bool operator==(const PipelineConfig&) const = default;
};

// Bounds checks for every field; throws naming the first offending key.
void validate_config(const PipelineConfig& config);

// key=value per line, '#' comments and blank lines skipped. Unknown or
// duplicate keys are rejected by name. Returns defaults overridden by the
// file's entries, validated.
PipelineConfig load_config(std::istream& in);

// The "# key=value" header block stamped on every output file, fixed order.
std::string config_echo(const PipelineConfig& config);

}  // namespace ndd
