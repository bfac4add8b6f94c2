#include "solarmpc/disturbance.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

namespace solarmpc {

namespace {

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    return out;
}

bool blank(const std::string& line) { return line.find_first_not_of(" \t\r") == std::string::npos; }

double parse_cell(const std::string& cell, const std::string& column, const std::string& source, int line)
{
    double v = 0;
    const auto r = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (cell.empty() || r.ec != std::errc() || r.ptr != cell.data() + cell.size() || !std::isfinite(v))
        throw ParseError(source + ": column " + column + ": not a finite number '" + cell + "'", line);
    return v;
}

} // namespace

DisturbanceSeries parse_disturbances(std::istream& in, double Ts, const std::string& source)
{
    if (!(Ts > 0))
        throw PreconditionError("parse_disturbances: Ts must be positive");
    std::string line;
    int n = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++n;
        if (!blank(line)) {
            header = split_csv(line);
            break;
        }
    }
    if (header.empty())
        throw ParseError(source + ": empty file, expected header t_s,irradiance_w_m2,temp_ext_c", std::max(n, 1));
    const int header_line = n;
    auto column = [&](const char* name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw ParseError(source + ": missing column " + name, header_line);
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t ct = column("t_s"), ci = column("irradiance_w_m2"), ca = column("temp_ext_c");

    DisturbanceSeries src;
    while (std::getline(in, line)) {
        ++n;
        if (blank(line))
            continue;
        const auto cells = split_csv(line);
        if (cells.size() != header.size())
            throw ParseError(source + ": expected " + std::to_string(header.size()) + " columns, got "
                                 + std::to_string(cells.size()),
                             n);
        DisturbanceSample s;
        s.t = parse_cell(cells[ct], "t_s", source, n);
        s.irradiance = parse_cell(cells[ci], "irradiance_w_m2", source, n);
        s.ambient = parse_cell(cells[ca], "temp_ext_c", source, n);
        if (s.irradiance < 0)
            throw ParseError(source + ": negative irradiance", n);
        if (!src.empty() && !(s.t > src.back().t))
            throw ParseError(source + ": time does not increase", n);
        src.push_back(s);
    }
    if (src.empty())
        throw ParseError(source + ": no data rows", header_line);

    const double t0 = src.front().t;
    const double span = src.back().t - t0;
    const auto K = static_cast<long>(std::floor(span / Ts * (1 + 1e-12)));
    DisturbanceSeries out;
    out.reserve(static_cast<std::size_t>(K + 1));
    std::size_t i = 0;
    for (long k = 0; k <= K; ++k) {
        const double t = t0 + static_cast<double>(k) * Ts;
        while (i + 1 < src.size() && src[i + 1].t <= t)
            ++i;
        if (src[i].t == t || i + 1 == src.size()) {
            out.push_back({t, src[i].irradiance, src[i].ambient});
            continue;
        }
        const DisturbanceSample& a = src[i];
        const DisturbanceSample& b = src[i + 1];
        const double s = (t - a.t) / (b.t - a.t);
        out.push_back({t, a.irradiance + s * (b.irradiance - a.irradiance), a.ambient + s * (b.ambient - a.ambient)});
    }
    return out;
}

DisturbanceSeries load_disturbances(const std::filesystem::path& path, double Ts)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open disturbance file " + path.string());
    return parse_disturbances(in, Ts, path.string());
}

void write_disturbances(std::ostream& out, const DisturbanceSeries& series)
{
    out << "t_s,irradiance_w_m2,temp_ext_c\n";
    char buf[128];
    for (const auto& s : series) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", s.t, s.irradiance, s.ambient);
        out << buf;
    }
}

void SynthSpec::validate() const
{
    if (!(Ts > 0))
        throw ConfigError("synthetic disturbance: Ts must be positive");
    if (!(duration >= 0))
        throw ConfigError("synthetic disturbance: duration must be non-negative");
    if (!(noise_std >= 0))
        throw ConfigError("synthetic disturbance: noise_std must be non-negative");
    if (!(ambient_period > 0))
        throw ConfigError("synthetic disturbance: ambient_period must be positive");
    std::vector<IrradianceStep> sorted = steps;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
    double level = base_irradiance;
    if (level < 0)
        throw ConfigError("synthetic disturbance: negative base irradiance");
    for (const auto& s : sorted) {
        if (!(s.t >= 0))
            throw ConfigError("synthetic disturbance: step times must be non-negative");
        level += s.delta;
        if (level < 0)
            throw ConfigError("synthetic disturbance: steps drive the irradiance negative");
    }
}

SynthSpec synth_spec_from(const KeyValueFile& kv, const std::string& prefix)
{
    SynthSpec s;
    s.Ts = kv.get_double(prefix + "ts", s.Ts);
    s.duration = kv.get_double(prefix + "duration", s.duration);
    s.base_irradiance = kv.get_double(prefix + "base_irradiance", s.base_irradiance);
    std::vector<double> times, deltas;
    for (const auto& st : s.steps) {
        times.push_back(st.t);
        deltas.push_back(st.delta);
    }
    times = kv.get_doubles(prefix + "step_times", times);
    deltas = kv.get_doubles(prefix + "step_deltas", deltas);
    if (times.size() != deltas.size())
        throw ConfigError(kv.source() + ": " + prefix + "step_times and " + prefix
                          + "step_deltas must have the same length");
    s.steps.clear();
    for (std::size_t i = 0; i < times.size(); ++i)
        s.steps.push_back({times[i], deltas[i]});
    s.ambient = kv.get_double(prefix + "ambient", s.ambient);
    s.ambient_amplitude = kv.get_double(prefix + "ambient_amplitude", s.ambient_amplitude);
    s.ambient_period = kv.get_double(prefix + "ambient_period", s.ambient_period);
    s.noise_std = kv.get_double(prefix + "noise_std", s.noise_std);
    s.seed = kv.get_uint64(prefix + "seed", s.seed);
    s.validate();
    return s;
}

DisturbanceSeries synth_disturbance(const SynthSpec& spec)
{
    spec.validate();
    const auto K = static_cast<long>(std::floor(spec.duration / spec.Ts * (1 + 1e-12)));
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    DisturbanceSeries out;
    out.reserve(static_cast<std::size_t>(K + 1));
    for (long k = 0; k <= K; ++k) {
        const double t = static_cast<double>(k) * spec.Ts;
        double I = spec.base_irradiance;
        for (const auto& s : spec.steps)
            if (k >= static_cast<long>(std::floor(s.t / spec.Ts)))
                I += s.delta;
        if (spec.noise_std > 0)
            I = std::max(0.0, I + spec.noise_std * noise(rng));
        const double Te = spec.ambient + spec.ambient_amplitude * std::sin(2 * EIGEN_PI * t / spec.ambient_period);
        out.push_back({t, I, Te});
    }
    return out;
}

} // namespace solarmpc
