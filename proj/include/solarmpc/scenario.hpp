#pragma once

// Closed-loop experiments: truth plant (RK4) driven by one of the three
// controllers over a disturbance series, per-sample records and metrics.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "solarmpc/config.hpp"
#include "solarmpc/controller.hpp"
#include "solarmpc/disturbance.hpp"
#include "solarmpc/lpv_model.hpp"
#include "solarmpc/tube.hpp"

namespace solarmpc {

enum class ControllerKind { AMPC, TMPC, LTIMPC };

std::string to_string(ControllerKind k);
ControllerKind parse_controller(const std::string& name);

struct ReferenceStep {
    double t = 0;   // s
    double x2 = 0;  // C
};

struct ScenarioConfig {
    ControllerKind controller = ControllerKind::AMPC;
    double Ts = 3;
    double duration = 3600;
    int N_back = 10;
    int N_fwd = 10;
    Eigen::Vector2d x0 = Eigen::Vector2d(60, 50);
    double u0 = 0;
    std::vector<ReferenceStep> reference{{0, 97}};

    /// Disturbances come from this CSV when set, otherwise from `synth`.
    std::filesystem::path disturbance_file;
    SynthSpec synth;
    bool preview_hold_last = false;  // preview repeats the current sample instead of the future ones

    /// Load-step times opening the rejection windows; the synthetic step times when empty.
    std::vector<double> rejection_steps;
    double rejection_window = 300;
    double steady_window = 150;  // tail of each regime checked against the tolerance band; load-step
                                 // regimes end when the step enters the preview

    Eigen::Matrix2d Q = Eigen::Vector2d(1, 10).asDiagonal();
    double R = 100;
    Eigen::Matrix2d Q_e = Eigen::Matrix2d::Identity();
    Eigen::Matrix4d Q_nu = Eigen::Matrix4d::Identity();
    bool mhe_measured_prior = false;  // AMPC bootstrap mu from the initial state instead of uniform
    bool literal_input_penalty = false;

    /// State box whose scheduling image carries the terminal certificate and the tube's rho_bar.
    Eigen::Vector2d operating_lo = Eigen::Vector2d(60, 50);
    Eigen::Vector2d operating_hi = Eigen::Vector2d(200, 150);
    UncertaintyRegion tube_region;
    double tube_eps = 0.05;
    int mrpi_directions = 64;

    int substeps = 10;                     // RK4 substeps per sample
    double max_infeasible_fraction = 0.1;  // above this the CLI exits with code 4
    bool csv_timing = false;               // solve_ms column; off keeps the CSV deterministic
    std::filesystem::path output_dir = "out";

    void validate(const PlantParams<double>& p) const;
    double reference_at(double t) const;
    int samples() const;
};

/// Keys are documented in docs/formats.md; unknown keys are rejected. Relative
/// disturbance paths resolve against the config file's directory.
ScenarioConfig scenario_config_from(const KeyValueFile& kv, const std::filesystem::path& base_dir = {});
ScenarioConfig load_scenario_config(const std::filesystem::path& path);

/// Every field that influences the closed loop except the controller choice, one `key = value` per line.
std::string scenario_fingerprint(const ScenarioConfig& cfg);

/// FNV-1a 64 over the fingerprint and the disturbance samples.
std::uint64_t scenario_hash(const ScenarioConfig& cfg, const DisturbanceSeries& w);

DisturbanceSeries scenario_disturbances(const ScenarioConfig& cfg);

/// Builds the configured controller, running its offline design. The model must outlive it.
std::unique_ptr<Controller> make_controller(const ScenarioConfig& cfg, const LpvModel<double>& model,
                                            const DisturbanceSeries& w);

struct SampleRecord {
    double t = 0;
    Eigen::Vector2d x = Eigen::Vector2d::Zero();
    double ref = 0;
    ControlDiagnostics diag;
    Eigen::Vector2d w = Eigen::Vector2d::Zero();
};

struct MetricsReport {
    std::string controller;
    std::uint64_t scenario_hash = 0;
    int samples = 0;
    double iae_tracking = 0;        // C, time-averaged |x2 - ref| over the run
    double iae_rejection = 0;       // C, same average over the rejection windows
    double tv = 0;                  // m^3/s, sum |u(k+1) - u(k)|
    double steady_max_error = 0;    // C, worst |x2 - ref| in the regime tails after the first load or reference step
    int constraint_violations = 0;  // samples with u outside U or the plant state outside X
    int infeasible_samples = 0;
    int reinitializations = 0;
    int clamped_samples = 0;
    double mean_solve_ms = 0;
    double max_solve_ms = 0;
};

struct ScenarioResult {
    std::vector<SampleRecord> series;
    MetricsReport report;
};

MetricsReport compute_metrics(const std::vector<SampleRecord>& series, const ScenarioConfig& cfg,
                              const PlantParams<double>& p);

ScenarioResult run_scenario(const ScenarioConfig& cfg);
ScenarioResult run_scenario(const ScenarioConfig& cfg, const DisturbanceSeries& w);

/// Independent runs on a pool of `workers` threads (hardware concurrency when 0); results in input order.
std::vector<ScenarioResult> run_scenarios(const std::vector<ScenarioConfig>& cfgs, unsigned workers = 0);

void write_series_csv(std::ostream& out, const std::vector<SampleRecord>& series, bool timing);
void write_report(std::ostream& out, const MetricsReport& r);
MetricsReport read_report(std::istream& in, const std::string& source = "<input>");

/// Writes <dir>/<controller>_series.csv and <dir>/<controller>_report.txt.
void write_outputs(const std::filesystem::path& dir, const ScenarioResult& result, bool timing);

struct Comparison {
    std::uint64_t scenario_hash = 0;
    std::vector<MetricsReport> rows;

    std::string table() const;
    std::string csv() const;
};

/// Requires at least two reports on the same scenario hash.
Comparison compare(const std::vector<MetricsReport>& reports);

} // namespace solarmpc
