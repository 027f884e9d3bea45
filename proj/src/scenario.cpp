#include "kfat/scenario.hpp"
#include "kfat/errors.hpp"
#include "kfat/io.hpp"
#include "kfat/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

namespace kfat {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kMaxSteer = kPi / 4.0;

// 0 below t0, 1 above t0 + width, linear in between.
double ramp(double t, double t0, double width)
{
    return std::clamp((t - t0) / width, 0.0, 1.0);
}

constexpr int kMultisineHarmonics = 24;

double multisine(double t, std::uint64_t seed, double amplitude)
{
    std::uint64_t phase_state = seed ^ 0x517cc1b727220a95ULL;
    double sum = 0.0;
    for (int j = 0; j < kMultisineHarmonics; ++j) {
        const double freq = 0.05 + 0.95 * static_cast<double>(j) / (kMultisineHarmonics - 1);
        const double phase = 2.0 * kPi *
                             (static_cast<double>(splitmix64(phase_state) >> 11) * 0x1.0p-53);
        sum += std::sin(2.0 * kPi * freq * t + phase);
    }
    return amplitude / std::sqrt(static_cast<double>(kMultisineHarmonics)) * sum;
}

// Fixed 40 s lap schedule; other durations play it time-scaled.
double lap_profile(double t, const ScenarioConfig& cfg)
{
    const double ts = t * 40.0 / cfg.duration;
    const double a = cfg.steer_amplitude;
    double steer = 0.0;
    steer += a * (ramp(ts, 4.0, 0.5) - ramp(ts, 9.5, 0.5));   // left sweep
    if (ts >= 14.0 && ts < 22.0) {
        steer += a * std::sin(2.0 * kPi * 0.5 * (ts - 14.0)); // slalom burst
    }
    steer -= a * (ramp(ts, 22.0, 0.5) - ramp(ts, 27.5, 0.5)); // right sweep
    if (ts >= 31.0 && ts < 35.0) {
        steer += a * std::sin(2.0 * kPi * (ts - 31.0) / 4.0); // lane change
    }
    return steer;
}

} // namespace

ManoeuvreKind parse_kind(const std::string& name)
{
    if (name == "skidpad") return ManoeuvreKind::skidpad;
    if (name == "slalom") return ManoeuvreKind::slalom;
    if (name == "j_turn") return ManoeuvreKind::j_turn;
    if (name == "lane_change") return ManoeuvreKind::lane_change;
    if (name == "braking_in_turn") return ManoeuvreKind::braking_in_turn;
    if (name == "spiral") return ManoeuvreKind::spiral;
    if (name == "random_steer") return ManoeuvreKind::random_steer;
    if (name == "lap") return ManoeuvreKind::lap;
    throw ConfigError("unknown manoeuvre kind: " + name);
}

std::string kind_name(ManoeuvreKind kind)
{
    switch (kind) {
    case ManoeuvreKind::skidpad: return "skidpad";
    case ManoeuvreKind::slalom: return "slalom";
    case ManoeuvreKind::j_turn: return "j_turn";
    case ManoeuvreKind::lane_change: return "lane_change";
    case ManoeuvreKind::braking_in_turn: return "braking_in_turn";
    case ManoeuvreKind::spiral: return "spiral";
    case ManoeuvreKind::random_steer: return "random_steer";
    case ManoeuvreKind::lap: return "lap";
    }
    throw ConfigError("unknown manoeuvre kind enum value");
}

void ScenarioConfig::validate() const
{
    if (!(dt > 0.0 && dt <= 0.1)) {
        throw ConfigError("scenario dt must lie in (0, 0.1]");
    }
    if (!(duration / dt >= 100.0)) {
        throw ConfigError("scenario must span at least 100 samples");
    }
    if (!(speed >= 5.0)) {
        throw ConfigError("scenario speed must be at least 5 m/s");
    }
    if (!(steer_amplitude >= 0.0 && steer_amplitude <= kMaxSteer)) {
        throw ConfigError("steer amplitude must lie in [0, pi/4]");
    }
    for (int i = 0; i < 3; ++i) {
        if (!(noise_std[i] >= 0.0) || !std::isfinite(noise_std[i])) {
            throw ConfigError("sensor noise std-devs must be nonnegative and finite");
        }
    }
    if (!(mismatch.stiffness_scale_front > 0.0 && mismatch.stiffness_scale_rear > 0.0)) {
        throw ConfigError("stiffness scale factors must be strictly positive");
    }
}

double steering_profile(ManoeuvreKind kind, double t, const ScenarioConfig& cfg)
{
    const double a = cfg.steer_amplitude;
    double steer = 0.0;
    switch (kind) {
    case ManoeuvreKind::skidpad:
    case ManoeuvreKind::braking_in_turn:
        steer = a;
        break;
    case ManoeuvreKind::slalom:
        steer = a * std::sin(2.0 * kPi * 0.5 * t);
        break;
    case ManoeuvreKind::j_turn:
        steer = a * ramp(t, 0.5, 0.5);
        break;
    case ManoeuvreKind::lane_change:
        // One full sine period of 4 s, entered after 1 s of straight running.
        steer = (t >= 1.0 && t < 5.0) ? a * std::sin(2.0 * kPi * (t - 1.0) / 4.0) : 0.0;
        break;
    case ManoeuvreKind::spiral:
        steer = a * t / cfg.duration;
        break;
    case ManoeuvreKind::random_steer:
        steer = multisine(t, cfg.seed, a);
        break;
    case ManoeuvreKind::lap:
        steer = lap_profile(t, cfg);
        break;
    }
    return std::clamp(steer, -kMaxSteer, kMaxSteer);
}

double accel_profile(ManoeuvreKind kind, double t, const ScenarioConfig& cfg)
{
    if (kind != ManoeuvreKind::braking_in_turn) {
        return 0.0;
    }
    const double start = 0.3 * cfg.duration;
    const double stop = 0.7 * cfg.duration;
    if (t < start || t >= stop) {
        return 0.0;
    }
    // Brake towards roughly 7 m/s over the window, never harder than 3 m/s^2.
    const double decel = std::max(cfg.speed - 7.0, 0.0) / (stop - start);
    return -std::min(decel, 3.0);
}

Manoeuvre generate(const ScenarioConfig& cfg, const VehicleParams& truth_params)
{
    cfg.validate();
    truth_params.validate();

    VehicleParams truth = truth_params;
    truth.cornering_stiffness_front *= cfg.mismatch.stiffness_scale_front;
    truth.cornering_stiffness_rear *= cfg.mismatch.stiffness_scale_rear;

    std::uint64_t seed_state = cfg.seed + 0x632be59bd9b4e019ULL;
    std::mt19937_64 rng(splitmix64(seed_state));
    std::normal_distribution<double> gauss(0.0, 1.0);

    Manoeuvre man;
    man.name = kind_name(cfg.kind);
    man.dt = cfg.dt;
    const auto n = static_cast<std::size_t>(std::llround(cfg.duration / cfg.dt));
    man.samples.reserve(n);

    VehicleState state{cfg.speed, 0.0, 0.0};
    for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) * cfg.dt;
        const ControlInput input{steering_profile(cfg.kind, t, cfg),
                                 accel_profile(cfg.kind, t, cfg)};
        const AxleLoads loads =
            cfg.mismatch.load_transfer
                ? axle_loads_with_transfer(truth, input.long_accel, cfg.mismatch.cg_height)
                : static_axle_loads(truth);

        const Measurement clean = measurement_model_with_loads(state, input, truth, loads);

        ManoeuvreSample s;
        s.t = t;
        s.steer_angle = input.steer_angle;
        s.long_accel = input.long_accel;
        s.meas_vx = clean.vx + cfg.noise_std[0] * gauss(rng);
        s.meas_ay = clean.ay + cfg.noise_std[1] * gauss(rng);
        s.meas_yawrate = clean.yaw_rate + cfg.noise_std[2] * gauss(rng);
        s.true_vx = state.vx;
        s.true_vy = state.vy;
        s.true_yawrate = state.yaw_rate;
        s.true_beta = sideslip(state);
        man.samples.push_back(s);

        try {
            state = dynamics_step_with_loads(state, input, truth, loads, cfg.dt);
        } catch (const NumericalError& e) {
            throw DataError("generate(" + man.name + "): simulation diverged at sample " +
                            std::to_string(k) + ": " + e.what());
        }
        if (!(state.vx > kLowSpeedThreshold)) {
            throw DataError("generate(" + man.name + "): speed collapsed at sample " +
                            std::to_string(k));
        }
    }
    man.validate();
    return man;
}

namespace {

struct SetEntry {
    ManoeuvreKind kind;
    double duration;
    double speed_lo, speed_hi;
    double amp_lo, amp_hi;
};

ScenarioConfig config_for(const SetEntry& entry, std::uint64_t base_seed, std::size_t idx)
{
    ScenarioConfig cfg;
    cfg.kind = entry.kind;
    cfg.duration = entry.duration;
    cfg.seed = base_seed * 64 + idx;

    std::uint64_t state = cfg.seed ^ 0x2545f4914f6cdd1dULL;
    auto uniform01 = [&state] {
        return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
    };
    cfg.speed = entry.speed_lo + (entry.speed_hi - entry.speed_lo) * uniform01();
    cfg.steer_amplitude = entry.amp_lo + (entry.amp_hi - entry.amp_lo) * uniform01();
    return cfg;
}

std::vector<ScenarioConfig> build_configs(const std::vector<SetEntry>& entries,
                                          std::uint64_t base_seed, std::size_t first_idx)
{
    std::vector<ScenarioConfig> configs;
    configs.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        configs.push_back(config_for(entries[i], base_seed, first_idx + i));
    }
    return configs;
}

const std::vector<SetEntry>& training_entries()
{
    static const std::vector<SetEntry> entries{
        {ManoeuvreKind::braking_in_turn, 12.0, 13.0, 18.0, 0.030, 0.050},
        {ManoeuvreKind::skidpad, 20.0, 12.0, 18.0, 0.030, 0.050},
        {ManoeuvreKind::j_turn, 10.0, 10.0, 18.0, 0.030, 0.060},
        {ManoeuvreKind::j_turn, 10.0, 10.0, 18.0, 0.030, 0.060},
        {ManoeuvreKind::slalom, 15.0, 12.0, 20.0, 0.035, 0.065},
        {ManoeuvreKind::slalom, 15.0, 12.0, 20.0, 0.035, 0.065},
        {ManoeuvreKind::lane_change, 8.0, 12.0, 20.0, 0.040, 0.070},
        {ManoeuvreKind::lane_change, 8.0, 12.0, 20.0, 0.040, 0.070},
    };
    return entries;
}

const std::vector<SetEntry>& test_entries()
{
    static const std::vector<SetEntry> entries{
        {ManoeuvreKind::braking_in_turn, 12.0, 13.0, 18.0, 0.030, 0.050},
        {ManoeuvreKind::braking_in_turn, 12.0, 13.0, 18.0, 0.030, 0.050},
        {ManoeuvreKind::skidpad, 20.0, 12.0, 18.0, 0.030, 0.050},
        {ManoeuvreKind::skidpad, 20.0, 12.0, 18.0, 0.030, 0.050},
        {ManoeuvreKind::j_turn, 10.0, 10.0, 18.0, 0.030, 0.060},
        {ManoeuvreKind::j_turn, 10.0, 10.0, 18.0, 0.030, 0.060},
        {ManoeuvreKind::j_turn, 10.0, 10.0, 18.0, 0.030, 0.060},
        {ManoeuvreKind::j_turn, 10.0, 10.0, 18.0, 0.030, 0.060},
        {ManoeuvreKind::j_turn, 10.0, 10.0, 18.0, 0.030, 0.060},
        {ManoeuvreKind::slalom, 15.0, 12.0, 20.0, 0.035, 0.065},
        {ManoeuvreKind::slalom, 15.0, 12.0, 20.0, 0.035, 0.065},
        {ManoeuvreKind::slalom, 15.0, 12.0, 20.0, 0.035, 0.065},
        {ManoeuvreKind::slalom, 15.0, 12.0, 20.0, 0.035, 0.065},
        {ManoeuvreKind::lane_change, 8.0, 12.0, 20.0, 0.040, 0.070},
        {ManoeuvreKind::lane_change, 8.0, 12.0, 20.0, 0.040, 0.070},
        {ManoeuvreKind::lane_change, 8.0, 12.0, 20.0, 0.040, 0.070},
        {ManoeuvreKind::lane_change, 8.0, 12.0, 20.0, 0.040, 0.070},
        {ManoeuvreKind::random_steer, 20.0, 12.0, 18.0, 0.030, 0.050},
        {ManoeuvreKind::random_steer, 20.0, 12.0, 18.0, 0.030, 0.050},
        {ManoeuvreKind::lap, 40.0, 12.0, 16.0, 0.030, 0.050},
        {ManoeuvreKind::spiral, 25.0, 10.0, 16.0, 0.040, 0.070},
        {ManoeuvreKind::spiral, 25.0, 10.0, 16.0, 0.040, 0.070},
        {ManoeuvreKind::spiral, 25.0, 10.0, 16.0, 0.040, 0.070},
    };
    return entries;
}

} // namespace

std::vector<ScenarioConfig> training_set_configs(std::uint64_t seed)
{
    return build_configs(training_entries(), seed, 0);
}

std::vector<ScenarioConfig> test_set_configs(std::uint64_t seed)
{
    return build_configs(test_entries(), seed, training_entries().size());
}

std::vector<Manoeuvre> realize_set(const std::vector<ScenarioConfig>& configs,
                                   const VehicleParams& truth_params, std::size_t first_index)
{
    std::vector<Manoeuvre> set(configs.size());
    for (std::size_t i = 0; i < configs.size(); ++i) {
        set[i] = generate(configs[i], truth_params);
        std::ostringstream tag;
        tag.width(2);
        tag.fill('0');
        tag << first_index + i;
        set[i].name = tag.str() + "_" + set[i].name;
    }
    return set;
}

std::vector<Manoeuvre> training_set(std::uint64_t seed, const VehicleParams& truth_params)
{
    return realize_set(training_set_configs(seed), truth_params, 0);
}

std::vector<Manoeuvre> test_set(std::uint64_t seed, const VehicleParams& truth_params)
{
    return realize_set(test_set_configs(seed), truth_params, training_entries().size());
}

namespace {

const char* kCsvHeader = "t,steer_angle,long_accel,meas_vx,meas_ay,meas_yawrate,"
                         "true_vx,true_vy,true_yawrate,true_beta";

} // namespace

void save(const Manoeuvre& man, const std::string& path)
{
    std::string out;
    out.reserve(man.samples.size() * 160 + 128);
    out += kCsvHeader;
    out += '\n';
    for (const auto& s : man.samples) {
        out += format_double(s.t);
        out += ',';
        out += format_double(s.steer_angle);
        out += ',';
        out += format_double(s.long_accel);
        out += ',';
        out += format_double(s.meas_vx);
        out += ',';
        out += format_double(s.meas_ay);
        out += ',';
        out += format_double(s.meas_yawrate);
        out += ',';
        out += format_double(s.true_vx);
        out += ',';
        out += format_double(s.true_vy);
        out += ',';
        out += format_double(s.true_yawrate);
        out += ',';
        out += format_double(s.true_beta);
        out += '\n';
    }
    write_text_file(path, out);
}

Manoeuvre load(const std::string& path)
{
    const std::string text = read_text_file(path);

    Manoeuvre man;
    man.name = std::filesystem::path(path).stem().string();

    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) {
            eol = text.size();
        }
        std::string_view line(text.data() + pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (line.empty()) {
            continue;
        }
        if (line_no == 1) {
            if (line != kCsvHeader) {
                throw DataError(path + ": unexpected CSV header at line 1");
            }
            continue;
        }
        const auto fields = split_csv_line(line);
        if (fields.size() != 10) {
            throw DataError(path + ": expected 10 fields, got " +
                            std::to_string(fields.size()) + " at line " +
                            std::to_string(line_no));
        }
        ManoeuvreSample s;
        s.t = parse_double(fields[0], path, line_no);
        s.steer_angle = parse_double(fields[1], path, line_no);
        s.long_accel = parse_double(fields[2], path, line_no);
        s.meas_vx = parse_double(fields[3], path, line_no);
        s.meas_ay = parse_double(fields[4], path, line_no);
        s.meas_yawrate = parse_double(fields[5], path, line_no);
        s.true_vx = parse_double(fields[6], path, line_no);
        s.true_vy = parse_double(fields[7], path, line_no);
        s.true_yawrate = parse_double(fields[8], path, line_no);
        s.true_beta = parse_double(fields[9], path, line_no);
        man.samples.push_back(s);
    }
    if (man.samples.size() < 2) {
        throw DataError(path + ": too few data rows");
    }
    man.dt = man.samples[1].t - man.samples[0].t;
    man.validate();
    return man;
}

} // namespace kfat
