#pragma once

// Load-disturbance series (irradiance, ambient temperature) on the sample grid:
// CSV ingestion with resampling, and a synthetic step profile.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "solarmpc/config.hpp"

namespace solarmpc {

struct DisturbanceSample {
    double t = 0;           // s
    double irradiance = 0;  // W/m^2
    double ambient = 0;     // C

    Eigen::Vector2d w() const { return {irradiance, ambient}; }
};

using DisturbanceSeries = std::vector<DisturbanceSample>;

/// CSV with header columns t_s, irradiance_w_m2, temp_ext_c (any order, extra columns ignored).
/// Times must increase strictly; the result sits on the grid t0 + k Ts up to the last source time,
/// linearly interpolated where the source grid differs.
DisturbanceSeries parse_disturbances(std::istream& in, double Ts, const std::string& source = "<input>");
DisturbanceSeries load_disturbances(const std::filesystem::path& path, double Ts);

/// Same header, values printed with 17 significant digits.
void write_disturbances(std::ostream& out, const DisturbanceSeries& series);

struct IrradianceStep {
    double t = 0;      // s
    double delta = 0;  // W/m^2, added from sample floor(t / Ts) on
};

struct SynthSpec {
    double Ts = 3;
    double duration = 3600;  // series covers t = 0 .. duration inclusive
    double base_irradiance = 700;
    std::vector<IrradianceStep> steps{{700, -150}, {2000, -100}};
    double ambient = 25;
    double ambient_amplitude = 0;  // sinusoidal ambient swing
    double ambient_period = 86400;
    double noise_std = 0;          // Gaussian irradiance noise, W/m^2; clipped at zero
    std::uint64_t seed = 1;

    void validate() const;
};

/// Keys: ts, duration, base_irradiance, step_times, step_deltas, ambient, ambient_amplitude,
/// ambient_period, noise_std, seed. `prefix` is prepended to each key.
SynthSpec synth_spec_from(const KeyValueFile& kv, const std::string& prefix = "");

DisturbanceSeries synth_disturbance(const SynthSpec& spec);

} // namespace solarmpc
