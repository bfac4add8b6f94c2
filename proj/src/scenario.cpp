#include "solarmpc/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>
#include <utility>

#include "solarmpc/plant.hpp"
#include "solarmpc/tracking.hpp"

namespace solarmpc {

namespace {

std::string num(double v)
{
    if (std::isnan(v))
        return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string list(const std::vector<double>& v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i)
        s += (i ? "," : "") + num(v[i]);
    return s;
}

template <typename Derived>
std::string diag_list(const Eigen::MatrixBase<Derived>& M)
{
    std::vector<double> d(M.diagonal().data(), M.diagonal().data() + M.rows());
    return list(d);
}

template <int Dim>
Eigen::Matrix<double, Dim, Dim> diag_from(const KeyValueFile& kv, const std::string& key,
                                          const Eigen::Matrix<double, Dim, Dim>& fallback)
{
    if (!kv.has(key))
        return fallback;
    const std::vector<double> d = kv.get_doubles(key, {});
    if (static_cast<int>(d.size()) != Dim)
        throw ConfigError(kv.source() + ":" + std::to_string(kv.line_of(key)) + ": " + key + ": expected "
                          + std::to_string(Dim) + " diagonal entries");
    Eigen::Matrix<double, Dim, Dim> M = Eigen::Matrix<double, Dim, Dim>::Zero();
    for (int i = 0; i < Dim; ++i)
        M(i, i) = d[static_cast<std::size_t>(i)];
    return M;
}

std::vector<double> load_step_starts(const ScenarioConfig& cfg)
{
    std::vector<double> steps = cfg.rejection_steps;
    if (steps.empty() && cfg.disturbance_file.empty())
        for (const auto& s : cfg.synth.steps)
            steps.push_back(s.t);
    // Align to the sample where the step takes effect.
    for (double& s : steps)
        s = std::floor(s / cfg.Ts) * cfg.Ts;
    std::sort(steps.begin(), steps.end());
    return steps;
}

std::uint64_t fnv1a(std::uint64_t h, const std::string& s)
{
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace

std::string to_string(ControllerKind k)
{
    switch (k) {
    case ControllerKind::AMPC:
        return "AMPC";
    case ControllerKind::TMPC:
        return "TMPC";
    case ControllerKind::LTIMPC:
        return "LTIMPC";
    }
    return "?";
}

ControllerKind parse_controller(const std::string& name)
{
    if (name == "AMPC")
        return ControllerKind::AMPC;
    if (name == "TMPC")
        return ControllerKind::TMPC;
    if (name == "LTIMPC")
        return ControllerKind::LTIMPC;
    throw ConfigError("unknown controller '" + name + "' (expected AMPC, TMPC or LTIMPC)");
}

int ScenarioConfig::samples() const { return static_cast<int>(std::lround(duration / Ts)); }

double ScenarioConfig::reference_at(double t) const
{
    double r = reference.front().x2;
    for (const auto& s : reference)
        if (s.t <= t)
            r = s.x2;
    return r;
}

void ScenarioConfig::validate(const PlantParams<double>& p) const
{
    if (!(Ts > 0))
        throw ConfigError("scenario: Ts must be positive");
    if (!(duration >= 0) || std::abs(duration / Ts - std::round(duration / Ts)) > 1e-9)
        throw ConfigError("scenario: duration must be a non-negative multiple of Ts");
    if (N_back < 1 || N_fwd < 1)
        throw ConfigError("scenario: horizons must be >= 1");
    if (!x0.allFinite() || !PlantState<double>::from_vector(x0).within_limits(p))
        throw ConfigError("scenario: x0 outside the admissible state box");
    if (!(u0 >= 0 && u0 <= p.u_max))
        throw ConfigError("scenario: u0 outside [0, u_max]");
    if (reference.empty() || reference.front().t != 0)
        throw ConfigError("scenario: the reference schedule must start at t = 0");
    for (std::size_t i = 0; i < reference.size(); ++i) {
        if (i > 0 && !(reference[i].t > reference[i - 1].t))
            throw ConfigError("scenario: reference times must increase");
        if (!(reference[i].x2 >= 0 && reference[i].x2 <= p.Tf_max))
            throw ConfigError("scenario: reference " + num(reference[i].x2) + " outside [0, Tf_max]");
    }
    if (!(rejection_window > 0) || !(steady_window > 0))
        throw ConfigError("scenario: rejection_window and steady_window must be positive");
    if (substeps < 1)
        throw ConfigError("scenario: substeps must be >= 1");
    if (!(max_infeasible_fraction >= 0 && max_infeasible_fraction <= 1))
        throw ConfigError("scenario: max_infeasible_fraction must lie in [0, 1]");
    if ((operating_lo.array() >= operating_hi.array()).any()
        || !PlantState<double>::from_vector(operating_lo).within_limits(p)
        || !PlantState<double>::from_vector(operating_hi).within_limits(p))
        throw ConfigError("scenario: operating box must be a nonempty box inside the state limits");
    if (disturbance_file.empty() && synth.Ts != Ts)
        throw ConfigError("scenario: synth.ts must equal ts");
    synth.validate();
}

ScenarioConfig scenario_config_from(const KeyValueFile& kv, const std::filesystem::path& base_dir)
{
    ScenarioConfig c;
    c.controller = parse_controller(kv.get_string("controller", to_string(c.controller)));
    c.Ts = kv.get_double("ts", c.Ts);
    c.duration = kv.get_double("duration", c.duration);
    c.N_back = kv.get_int("n_back", c.N_back);
    c.N_fwd = kv.get_int("n_fwd", c.N_fwd);
    c.x0 = kv.get_vec2("x0", c.x0);
    c.u0 = kv.get_double("u0", c.u0);

    const std::vector<double> rt = kv.get_doubles("reference_times", {0});
    const std::vector<double> rv = kv.get_doubles("reference_values", {97});
    if (rt.size() != rv.size() || rt.empty())
        throw ConfigError(kv.source() + ": reference_times and reference_values must be nonempty and equally long");
    c.reference.clear();
    for (std::size_t i = 0; i < rt.size(); ++i)
        c.reference.push_back({rt[i], rv[i]});

    const std::string df = kv.get_string("disturbance_file", "");
    if (!df.empty()) {
        std::filesystem::path path(df);
        c.disturbance_file = path.is_relative() && !base_dir.empty() ? base_dir / path : path;
    }
    c.synth = synth_spec_from(kv, "synth.");
    if (!kv.has("synth.ts"))
        c.synth.Ts = c.Ts;
    if (!kv.has("synth.duration"))
        c.synth.duration = c.duration;
    c.preview_hold_last = kv.get_bool("preview_hold_last", c.preview_hold_last);

    c.rejection_steps = kv.get_doubles("rejection_steps", c.rejection_steps);
    c.rejection_window = kv.get_double("rejection_window", c.rejection_window);
    c.steady_window = kv.get_double("steady_window", c.steady_window);

    c.Q = diag_from<2>(kv, "q", c.Q);
    c.R = kv.get_double("r", c.R);
    c.Q_e = diag_from<2>(kv, "q_e", c.Q_e);
    c.Q_nu = diag_from<4>(kv, "q_nu", c.Q_nu);
    c.mhe_measured_prior = kv.get_bool("mhe_measured_prior", c.mhe_measured_prior);
    c.literal_input_penalty = kv.get_bool("literal_input_penalty", c.literal_input_penalty);

    c.operating_lo = kv.get_vec2("operating_lo", c.operating_lo);
    c.operating_hi = kv.get_vec2("operating_hi", c.operating_hi);
    c.tube_region.x_lo = kv.get_vec2("tube.x_lo", c.tube_region.x_lo);
    c.tube_region.x_hi = kv.get_vec2("tube.x_hi", c.tube_region.x_hi);
    c.tube_region.u_lo = kv.get_double("tube.u_lo", c.tube_region.u_lo);
    c.tube_region.u_hi = kv.get_double("tube.u_hi", c.tube_region.u_hi);
    c.tube_region.grid = kv.get_int("tube.grid", c.tube_region.grid);
    c.tube_region.inflation = kv.get_double("tube.inflation", c.tube_region.inflation);
    c.tube_eps = kv.get_double("tube.eps", c.tube_eps);
    c.mrpi_directions = kv.get_int("tube.mrpi_directions", c.mrpi_directions);

    c.substeps = kv.get_int("substeps", c.substeps);
    c.max_infeasible_fraction = kv.get_double("max_infeasible_fraction", c.max_infeasible_fraction);
    c.csv_timing = kv.get_bool("csv_timing", c.csv_timing);
    c.output_dir = kv.get_string("output_dir", c.output_dir.string());
    if (c.output_dir.is_relative() && !base_dir.empty() && kv.has("output_dir"))
        c.output_dir = base_dir / c.output_dir;
    kv.reject_unread();
    return c;
}

ScenarioConfig load_scenario_config(const std::filesystem::path& path)
{
    return scenario_config_from(KeyValueFile::load(path), path.parent_path());
}

std::string scenario_fingerprint(const ScenarioConfig& c)
{
    std::ostringstream o;
    o << "ts = " << num(c.Ts) << "\nduration = " << num(c.duration) << "\nn_back = " << c.N_back
      << "\nn_fwd = " << c.N_fwd << "\nx0 = " << num(c.x0(0)) << "," << num(c.x0(1)) << "\nu0 = " << num(c.u0);
    std::vector<double> rt, rv;
    for (const auto& r : c.reference) {
        rt.push_back(r.t);
        rv.push_back(r.x2);
    }
    o << "\nreference_times = " << list(rt) << "\nreference_values = " << list(rv)
      << "\npreview_hold_last = " << c.preview_hold_last << "\nrejection_steps = " << list(load_step_starts(c))
      << "\nrejection_window = " << num(c.rejection_window) << "\nsteady_window = " << num(c.steady_window)
      << "\nq = " << diag_list(c.Q) << "\nr = " << num(c.R) << "\nq_e = " << diag_list(c.Q_e)
      << "\nq_nu = " << diag_list(c.Q_nu) << "\nmhe_measured_prior = " << c.mhe_measured_prior << "\nliteral_input_penalty = " << c.literal_input_penalty
      << "\noperating_lo = " << num(c.operating_lo(0)) << "," << num(c.operating_lo(1))
      << "\noperating_hi = " << num(c.operating_hi(0)) << "," << num(c.operating_hi(1))
      << "\ntube.x_lo = " << num(c.tube_region.x_lo(0)) << "," << num(c.tube_region.x_lo(1))
      << "\ntube.x_hi = " << num(c.tube_region.x_hi(0)) << "," << num(c.tube_region.x_hi(1))
      << "\ntube.u_lo = " << num(c.tube_region.u_lo) << "\ntube.u_hi = " << num(c.tube_region.u_hi)
      << "\ntube.grid = " << c.tube_region.grid << "\ntube.inflation = " << num(c.tube_region.inflation)
      << "\ntube.eps = " << num(c.tube_eps) << "\ntube.mrpi_directions = " << c.mrpi_directions
      << "\nsubsteps = " << c.substeps << "\n";
    return o.str();
}

std::uint64_t scenario_hash(const ScenarioConfig& cfg, const DisturbanceSeries& w)
{
    std::uint64_t h = fnv1a(14695981039346656037ULL, scenario_fingerprint(cfg));
    for (const auto& s : w)
        h = fnv1a(h, num(s.t) + "," + num(s.irradiance) + "," + num(s.ambient) + "\n");
    return h;
}

DisturbanceSeries scenario_disturbances(const ScenarioConfig& cfg)
{
    if (!cfg.disturbance_file.empty())
        return load_disturbances(cfg.disturbance_file, cfg.Ts);
    return synth_disturbance(cfg.synth);
}

std::unique_ptr<Controller> make_controller(const ScenarioConfig& cfg, const LpvModel<double>& model,
                                            const DisturbanceSeries& w)
{
    const PlantParams<double>& p = model.params();
    if (w.empty())
        throw ConfigError("make_controller: empty disturbance series");
    const Eigen::Vector2d x_max(p.Tp_max, p.Tf_max);
    const double ref0 = cfg.reference_at(0);

    if (cfg.controller == ControllerKind::TMPC) {
        TubeConfig tc;
        tc.N = cfg.N_fwd;
        tc.Q = cfg.Q;
        tc.R = cfg.R;
        tc.eps = cfg.tube_eps;
        tc.mrpi_directions = cfg.mrpi_directions;
        tc.region = cfg.tube_region;
        tc.u_max = p.u_max;
        tc.x_max = x_max;
        tc.rho_bar = scheduling_midpoint_for_state_box(model, cfg.operating_lo, cfg.operating_hi);
        auto c = std::make_unique<TubeController>(model, tc);
        try {
            (void)nominal_target(c->design(), ref0, w.front().w());
        } catch (const InfeasibleTargetError& e) {
            throw SynthesisError(std::string("tube design admits no nominal target: ") + e.what());
        }
        return c;
    }

    TrackingConfig tc;
    tc.N = cfg.N_fwd;
    tc.Q = cfg.Q;
    tc.R = cfg.R;
    tc.literal_input_penalty = cfg.literal_input_penalty;
    tc.u_max = p.u_max;
    tc.x_max = x_max;
    TerminalIngredients term =
        synthesize_terminal(vertices_for_state_box(model, cfg.operating_lo, cfg.operating_hi), cfg.Q, cfg.R);
    TargetPair target;
    try {
        target = steady_pair_for(ref0, w.front().w(), model);
    } catch (const InfeasibleTargetError& e) {
        throw SynthesisError(std::string("no steady state for the initial reference: ") + e.what());
    }
    attach_terminal_set(term, HPolytope<double>::box(Eigen::VectorXd::Zero(2), Eigen::VectorXd(x_max)), target.x_s);

    if (cfg.controller == ControllerKind::LTIMPC)
        return std::make_unique<TrackingController>(TrackingController::lti(model, tc, std::move(term)));
    MheConfig mc;
    mc.N = cfg.N_back;
    mc.Q_e = cfg.Q_e;
    mc.Q_nu = cfg.Q_nu;
    mc.measured_prior = cfg.mhe_measured_prior;
    return std::make_unique<TrackingController>(model, tc, mc, std::move(term));
}

MetricsReport compute_metrics(const std::vector<SampleRecord>& series, const ScenarioConfig& cfg,
                              const PlantParams<double>& p)
{
    MetricsReport r;
    r.samples = static_cast<int>(series.size());
    if (series.empty())
        return r;

    const std::vector<double> steps = load_step_starts(cfg);
    // Regime boundaries as (time, tail end). A load step shows up in the disturbance preview
    // N_fwd samples early and the controller starts moving then, so its regime tail ends there.
    const double preview_lead = cfg.preview_hold_last ? 0.0 : cfg.N_fwd * cfg.Ts;
    std::vector<std::pair<double, double>> events;
    for (double s : steps)
        if (s > 0 && s < cfg.duration)
            events.emplace_back(s, s - preview_lead);
    for (const auto& ref : cfg.reference)
        if (ref.t > 0 && ref.t < cfg.duration)
            events.emplace_back(ref.t, ref.t);
    events.emplace_back(cfg.duration, cfg.duration);
    std::sort(events.begin(), events.end());

    double sum_abs = 0, sum_rej = 0, sum_ms = 0;
    int n_rej = 0;
    for (std::size_t k = 0; k < series.size(); ++k) {
        const SampleRecord& s = series[k];
        const double e = std::abs(s.x(1) - s.ref);
        sum_abs += e;
        const bool in_rejection = std::any_of(steps.begin(), steps.end(), [&](double st) {
            return s.t >= st && s.t < st + cfg.rejection_window;
        });
        if (in_rejection) {
            sum_rej += e;
            ++n_rej;
        }
        // The regime opened by the initial state is a start-up transient, not a steady regime.
        for (std::size_t i = events.size() > 1 ? 1 : 0; i < events.size(); ++i) {
            const double from = std::max(i ? events[i - 1].first : 0.0, events[i].second - cfg.steady_window);
            if (s.t >= from && s.t < events[i].second)
                r.steady_max_error = std::max(r.steady_max_error, e);
        }
        if (k > 0)
            r.tv += std::abs(s.diag.u - series[k - 1].diag.u);
        const bool u_ok = s.diag.u >= 0 && s.diag.u <= p.u_max;
        if (!u_ok || !PlantState<double>::from_vector(s.x).within_limits(p))
            ++r.constraint_violations;
        r.infeasible_samples += !s.diag.feasible;
        r.reinitializations += s.diag.reinitialized;
        r.clamped_samples += s.diag.clamped;
        sum_ms += s.diag.solve_ms;
        r.max_solve_ms = std::max(r.max_solve_ms, s.diag.solve_ms);
    }
    r.iae_tracking = sum_abs / static_cast<double>(series.size());
    r.iae_rejection = n_rej ? sum_rej / n_rej : 0;
    r.mean_solve_ms = sum_ms / static_cast<double>(series.size());
    return r;
}

ScenarioResult run_scenario(const ScenarioConfig& cfg) { return run_scenario(cfg, scenario_disturbances(cfg)); }

ScenarioResult run_scenario(const ScenarioConfig& cfg, const DisturbanceSeries& w)
{
    const PlantParams<double> p;
    cfg.validate(p);
    const int K = cfg.samples();
    if (static_cast<int>(w.size()) < std::max(K, 1))
        throw ConfigError("scenario: disturbance series has " + std::to_string(w.size()) + " samples, the run needs "
                          + std::to_string(K));
    const LpvModel<double> model(p, cfg.Ts);
    std::unique_ptr<Controller> ctrl = make_controller(cfg, model, w);

    ScenarioResult out;
    out.series.reserve(static_cast<std::size_t>(K));
    Eigen::Vector2d x = cfg.x0;
    ctrl->reset(x, cfg.u0);
    std::vector<Eigen::Vector2d> preview(static_cast<std::size_t>(cfg.N_fwd));
    for (int k = 0; k < K; ++k) {
        const double t = k * cfg.Ts;
        const double ref = cfg.reference_at(t);
        for (int j = 0; j < cfg.N_fwd; ++j) {
            const std::size_t idx = cfg.preview_hold_last ? static_cast<std::size_t>(k)
                                                          : std::min(static_cast<std::size_t>(k + j), w.size() - 1);
            preview[static_cast<std::size_t>(j)] = w[idx].w();
        }
        SampleRecord rec;
        rec.t = t;
        rec.x = x;
        rec.ref = ref;
        rec.w = w[static_cast<std::size_t>(k)].w();
        rec.diag = ctrl->step(x, preview, ref);
        out.series.push_back(rec);
        const Exogenous<double> e{rec.w(0), rec.w(1), rec.diag.u};
        x = integrate_step(PlantState<double>::from_vector(x), e, p, cfg.Ts, cfg.substeps).vector();
    }
    out.report = compute_metrics(out.series, cfg, p);
    out.report.controller = to_string(cfg.controller);
    out.report.scenario_hash = scenario_hash(cfg, w);
    return out;
}

std::vector<ScenarioResult> run_scenarios(const std::vector<ScenarioConfig>& cfgs, unsigned workers)
{
    if (workers == 0)
        workers = std::max(1u, std::thread::hardware_concurrency());
    workers = std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(cfgs.size(), 1)));
    std::vector<ScenarioResult> results(cfgs.size());
    std::vector<std::exception_ptr> errors(cfgs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < cfgs.size(); i = next++) {
            try {
                results[i] = run_scenario(cfgs[i]);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::future<void>> pool;
    for (unsigned i = 0; i < workers; ++i)
        pool.push_back(std::async(std::launch::async, worker));
    for (auto& f : pool)
        f.get();
    for (const auto& e : errors)
        if (e)
            std::rethrow_exception(e);
    return results;
}

void write_series_csv(std::ostream& out, const std::vector<SampleRecord>& series, bool timing)
{
    out << "t_s,x1_c,x2_c,ref_c,u_m3_s,irradiance_w_m2,temp_ext_c,mu1,mu2,mu3,mu4,cost,qp_iters,solve_ms,feasible,"
           "z1,z2,v,containment,reinitialized,clamped\n";
    for (const auto& s : series) {
        const ControlDiagnostics& d = s.diag;
        out << num(s.t) << ',' << num(s.x(0)) << ',' << num(s.x(1)) << ',' << num(s.ref) << ',' << num(d.u) << ','
            << num(s.w(0)) << ',' << num(s.w(1));
        for (int j = 0; j < 4; ++j)
            out << ',' << num(d.mu(j));
        out << ',' << num(d.cost) << ',' << d.qp_iterations << ',' << num(timing ? d.solve_ms : 0.0) << ','
            << int(d.feasible) << ',' << num(d.z(0)) << ',' << num(d.z(1)) << ',' << num(d.v) << ','
            << int(d.containment) << ',' << int(d.reinitialized) << ',' << int(d.clamped) << '\n';
    }
}

void write_report(std::ostream& out, const MetricsReport& r)
{
    out << "controller = " << r.controller << "\nscenario_hash = " << hex64(r.scenario_hash)
        << "\nsamples = " << r.samples << "\niae_tracking = " << num(r.iae_tracking)
        << "\niae_rejection = " << num(r.iae_rejection) << "\ntv = " << num(r.tv)
        << "\nsteady_max_error = " << num(r.steady_max_error)
        << "\nconstraint_violations = " << r.constraint_violations
        << "\ninfeasible_samples = " << r.infeasible_samples << "\nreinitializations = " << r.reinitializations
        << "\nclamped_samples = " << r.clamped_samples << "\nmean_solve_ms = " << num(r.mean_solve_ms)
        << "\nmax_solve_ms = " << num(r.max_solve_ms) << "\n";
}

MetricsReport read_report(std::istream& in, const std::string& source)
{
    const KeyValueFile kv = KeyValueFile::parse(in, source);
    MetricsReport r;
    r.controller = kv.raw("controller");
    const std::string h = kv.raw("scenario_hash");
    try {
        std::size_t used = 0;
        r.scenario_hash = std::stoull(h, &used, 16);
        if (used != h.size())
            throw std::invalid_argument(h);
    } catch (const std::logic_error&) {
        throw ParseError(source + ": scenario_hash is not a hexadecimal number", kv.line_of("scenario_hash"));
    }
    auto need = [&](const char* key) {
        if (!kv.has(key))
            throw ParseError(source + ": missing key " + key);
    };
    for (const char* k : {"samples", "iae_tracking", "iae_rejection", "tv", "steady_max_error", "constraint_violations",
                          "infeasible_samples", "reinitializations", "clamped_samples", "mean_solve_ms",
                          "max_solve_ms"})
        need(k);
    r.samples = kv.get_int("samples", 0);
    r.iae_tracking = kv.get_double("iae_tracking", 0);
    r.iae_rejection = kv.get_double("iae_rejection", 0);
    r.tv = kv.get_double("tv", 0);
    r.steady_max_error = kv.get_double("steady_max_error", 0);
    r.constraint_violations = kv.get_int("constraint_violations", 0);
    r.infeasible_samples = kv.get_int("infeasible_samples", 0);
    r.reinitializations = kv.get_int("reinitializations", 0);
    r.clamped_samples = kv.get_int("clamped_samples", 0);
    r.mean_solve_ms = kv.get_double("mean_solve_ms", 0);
    r.max_solve_ms = kv.get_double("max_solve_ms", 0);
    return r;
}

void write_outputs(const std::filesystem::path& dir, const ScenarioResult& result, bool timing)
{
    std::filesystem::create_directories(dir);
    const std::string stem = result.report.controller;
    std::ofstream csv(dir / (stem + "_series.csv"));
    std::ofstream rep(dir / (stem + "_report.txt"));
    if (!csv || !rep)
        throw ConfigError("cannot write outputs under " + dir.string());
    write_series_csv(csv, result.series, timing);
    write_report(rep, result.report);
}

Comparison compare(const std::vector<MetricsReport>& reports)
{
    if (reports.size() < 2)
        throw ComparisonError("compare: need at least two reports");
    for (const auto& r : reports)
        if (r.scenario_hash != reports.front().scenario_hash)
            throw ComparisonError("compare: scenario mismatch (" + hex64(r.scenario_hash) + " vs "
                                  + hex64(reports.front().scenario_hash) + ")");
    return {reports.front().scenario_hash, reports};
}

std::string Comparison::table() const
{
    std::string out = "scenario " + hex64(scenario_hash) + "\n";
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-8s %12s %13s %12s %12s %10s %10s %10s %10s\n", "ctrl", "iae_track", "iae_reject",
                  "tv", "steady_err", "violations", "infeasible", "mean_ms", "max_ms");
    out += buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-8s %12.6g %13.6g %12.6g %12.6g %10d %10d %10.4g %10.4g\n",
                      r.controller.c_str(), r.iae_tracking, r.iae_rejection, r.tv, r.steady_max_error,
                      r.constraint_violations, r.infeasible_samples, r.mean_solve_ms, r.max_solve_ms);
        out += buf;
    }
    return out;
}

std::string Comparison::csv() const
{
    std::string out = "scenario_hash,controller,samples,iae_tracking,iae_rejection,tv,steady_max_error,"
                      "constraint_violations,infeasible_samples,reinitializations,clamped_samples,mean_solve_ms,"
                      "max_solve_ms\n";
    for (const auto& r : rows)
        out += hex64(scenario_hash) + "," + r.controller + "," + std::to_string(r.samples) + "," + num(r.iae_tracking)
            + "," + num(r.iae_rejection) + "," + num(r.tv) + "," + num(r.steady_max_error) + ","
            + std::to_string(r.constraint_violations) + "," + std::to_string(r.infeasible_samples) + ","
            + std::to_string(r.reinitializations) + "," + std::to_string(r.clamped_samples) + ","
            + num(r.mean_solve_ms) + "," + num(r.max_solve_ms) + "\n";
    return out;
}

} // namespace solarmpc
