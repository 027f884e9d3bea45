#include "kfat/errors.hpp"
#include "kfat/io.hpp"
#include "kfat/scenario.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

using namespace kfat;

namespace {

std::filesystem::path scratch_dir()
{
    const auto dir = std::filesystem::temp_directory_path() / "kfat_test_scenario";
    std::filesystem::create_directories(dir);
    return dir;
}

// Replays the truth simulator the way generate() runs it.
VehicleState resimulate_step(const VehicleState& state, const ManoeuvreSample& s,
                             const VehicleParams& params, const MismatchSpec& mis, double dt)
{
    VehicleParams truth = params;
    truth.cornering_stiffness_front *= mis.stiffness_scale_front;
    truth.cornering_stiffness_rear *= mis.stiffness_scale_rear;
    const ControlInput input{s.steer_angle, s.long_accel};
    const AxleLoads loads = mis.load_transfer
                                ? axle_loads_with_transfer(truth, input.long_accel, mis.cg_height)
                                : static_axle_loads(truth);
    return dynamics_step_with_loads(state, input, truth, loads, dt);
}

} // namespace

TEST_SUITE("scenario")
{
    TEST_CASE("kind names round-trip")
    {
        for (const auto kind :
             {ManoeuvreKind::skidpad, ManoeuvreKind::slalom, ManoeuvreKind::j_turn,
              ManoeuvreKind::lane_change, ManoeuvreKind::braking_in_turn, ManoeuvreKind::spiral,
              ManoeuvreKind::random_steer, ManoeuvreKind::lap}) {
            CHECK(parse_kind(kind_name(kind)) == kind);
        }
        CHECK_THROWS_AS(parse_kind("donuts"), ConfigError);
    }

    TEST_CASE("steering profiles")
    {
        ScenarioConfig cfg;
        cfg.steer_amplitude = 0.04;
        cfg.duration = 20.0;

        SUBCASE("skidpad holds the amplitude")
        {
            for (double t : {0.0, 1.7, 12.3, 19.99}) {
                CHECK(steering_profile(ManoeuvreKind::skidpad, t, cfg) == 0.04);
                CHECK(steering_profile(ManoeuvreKind::braking_in_turn, t, cfg) == 0.04);
            }
        }
        SUBCASE("slalom is a 0.5 Hz sine")
        {
            CHECK(steering_profile(ManoeuvreKind::slalom, 0.0, cfg) == 0.0);
            // Zeros fall on whole seconds for a 0.5 Hz wave.
            CHECK(std::abs(steering_profile(ManoeuvreKind::slalom, 1.0, cfg)) < 1e-15);
            CHECK(std::abs(steering_profile(ManoeuvreKind::slalom, 2.0, cfg)) < 1e-15);
            CHECK(steering_profile(ManoeuvreKind::slalom, 0.5, cfg) ==
                  doctest::Approx(0.04).epsilon(1e-12));
            CHECK(steering_profile(ManoeuvreKind::slalom, 1.5, cfg) ==
                  doctest::Approx(-0.04).epsilon(1e-12));
        }
        SUBCASE("j-turn ramps between 0.5 s and 1 s")
        {
            CHECK(steering_profile(ManoeuvreKind::j_turn, 0.0, cfg) == 0.0);
            CHECK(steering_profile(ManoeuvreKind::j_turn, 0.5, cfg) == 0.0);
            CHECK(steering_profile(ManoeuvreKind::j_turn, 0.75, cfg) ==
                  doctest::Approx(0.02).epsilon(1e-12));
            CHECK(steering_profile(ManoeuvreKind::j_turn, 1.0, cfg) == 0.04);
            CHECK(steering_profile(ManoeuvreKind::j_turn, 15.0, cfg) == 0.04);
        }
        SUBCASE("lane change is one sine period after 1 s")
        {
            CHECK(steering_profile(ManoeuvreKind::lane_change, 0.5, cfg) == 0.0);
            CHECK(steering_profile(ManoeuvreKind::lane_change, 2.0, cfg) ==
                  doctest::Approx(0.04).epsilon(1e-12));
            CHECK(steering_profile(ManoeuvreKind::lane_change, 4.0, cfg) ==
                  doctest::Approx(-0.04).epsilon(1e-12));
            CHECK(steering_profile(ManoeuvreKind::lane_change, 5.5, cfg) == 0.0);
        }
        SUBCASE("spiral ramps linearly over the full duration")
        {
            CHECK(steering_profile(ManoeuvreKind::spiral, 0.0, cfg) == 0.0);
            CHECK(steering_profile(ManoeuvreKind::spiral, 10.0, cfg) ==
                  doctest::Approx(0.02).epsilon(1e-12));
            CHECK(steering_profile(ManoeuvreKind::spiral, 20.0, cfg) ==
                  doctest::Approx(0.04).epsilon(1e-12));
        }
        SUBCASE("random steer is seeded and bounded")
        {
            ScenarioConfig other = cfg;
            other.seed = cfg.seed + 1;
            bool differs = false;
            for (int k = 0; k < 500; ++k) {
                const double t = 0.04 * k;
                const double s1 = steering_profile(ManoeuvreKind::random_steer, t, cfg);
                const double s2 = steering_profile(ManoeuvreKind::random_steer, t, cfg);
                CHECK(s1 == s2);
                CHECK(std::abs(s1) <= M_PI / 4.0);
                differs |= s1 != steering_profile(ManoeuvreKind::random_steer, t, other);
            }
            CHECK(differs);
        }
    }

    TEST_CASE("acceleration profile brakes only mid-run")
    {
        ScenarioConfig cfg;
        cfg.duration = 10.0;
        cfg.speed = 15.0;
        CHECK(accel_profile(ManoeuvreKind::slalom, 5.0, cfg) == 0.0);
        CHECK(accel_profile(ManoeuvreKind::braking_in_turn, 1.0, cfg) == 0.0);
        CHECK(accel_profile(ManoeuvreKind::braking_in_turn, 8.0, cfg) == 0.0);
        const double mid = accel_profile(ManoeuvreKind::braking_in_turn, 5.0, cfg);
        CHECK(mid < 0.0);
        CHECK(mid >= -3.0);
    }

    TEST_CASE("config validation")
    {
        ScenarioConfig cfg;
        cfg.dt = 0.0;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
        cfg = ScenarioConfig{};
        cfg.duration = 0.5;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
        cfg = ScenarioConfig{};
        cfg.speed = 2.0;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
        cfg = ScenarioConfig{};
        cfg.noise_std[1] = -0.1;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
        cfg = ScenarioConfig{};
        cfg.steer_amplitude = 1.0;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }

    TEST_CASE("zero noise reproduces the model outputs exactly")
    {
        ScenarioConfig cfg;
        cfg.kind = ManoeuvreKind::slalom;
        cfg.duration = 10.0;
        cfg.noise_std.setZero();
        const Manoeuvre man = generate(cfg, VehicleParams{});
        for (const auto& s : man.samples) {
            CHECK(s.meas_vx == s.true_vx);
            CHECK(s.meas_yawrate == s.true_yawrate);
        }
        // The ay channel has no stored truth; recompute it from the truth model.
        VehicleParams truth;
        truth.cornering_stiffness_front *= cfg.mismatch.stiffness_scale_front;
        truth.cornering_stiffness_rear *= cfg.mismatch.stiffness_scale_rear;
        for (const auto& s : man.samples) {
            const ControlInput input{s.steer_angle, s.long_accel};
            const AxleLoads loads =
                axle_loads_with_transfer(truth, input.long_accel, cfg.mismatch.cg_height);
            const Measurement m = measurement_model_with_loads(
                {s.true_vx, s.true_vy, s.true_yawrate}, input, truth, loads);
            CHECK(s.meas_ay == m.ay);
        }
    }

    TEST_CASE("same seed gives a bit-identical manoeuvre")
    {
        ScenarioConfig cfg;
        cfg.kind = ManoeuvreKind::j_turn;
        cfg.duration = 8.0;
        cfg.seed = 42;
        const Manoeuvre a = generate(cfg, VehicleParams{});
        const Manoeuvre b = generate(cfg, VehicleParams{});
        REQUIRE(a.samples.size() == b.samples.size());
        for (std::size_t k = 0; k < a.samples.size(); ++k) {
            CHECK(a.samples[k].meas_vx == b.samples[k].meas_vx);
            CHECK(a.samples[k].meas_ay == b.samples[k].meas_ay);
            CHECK(a.samples[k].meas_yawrate == b.samples[k].meas_yawrate);
            CHECK(a.samples[k].true_vy == b.samples[k].true_vy);
        }
    }

    TEST_CASE("stored truth channels replay under the truth model")
    {
        ScenarioConfig cfg;
        cfg.kind = ManoeuvreKind::braking_in_turn;
        cfg.duration = 12.0;
        cfg.seed = 3;
        const Manoeuvre man = generate(cfg, VehicleParams{});
        VehicleState state{man.samples[0].true_vx, man.samples[0].true_vy,
                           man.samples[0].true_yawrate};
        for (std::size_t k = 0; k + 1 < man.samples.size(); ++k) {
            state = resimulate_step(state, man.samples[k], VehicleParams{}, cfg.mismatch, cfg.dt);
            CHECK(std::abs(state.vx - man.samples[k + 1].true_vx) < 1e-9);
            CHECK(std::abs(state.vy - man.samples[k + 1].true_vy) < 1e-9);
            CHECK(std::abs(state.yaw_rate - man.samples[k + 1].true_yawrate) < 1e-9);
        }
    }

    TEST_CASE("empirical noise level matches the configuration")
    {
        ScenarioConfig cfg;
        cfg.kind = ManoeuvreKind::skidpad;
        cfg.duration = 40.0;
        cfg.seed = 11;
        const Manoeuvre man = generate(cfg, VehicleParams{});
        REQUIRE(man.samples.size() >= 3000);

        VehicleParams truth;
        truth.cornering_stiffness_front *= cfg.mismatch.stiffness_scale_front;
        truth.cornering_stiffness_rear *= cfg.mismatch.stiffness_scale_rear;

        Eigen::Vector3d sq_sum = Eigen::Vector3d::Zero();
        for (const auto& s : man.samples) {
            const ControlInput input{s.steer_angle, s.long_accel};
            const AxleLoads loads =
                axle_loads_with_transfer(truth, input.long_accel, cfg.mismatch.cg_height);
            const Measurement clean = measurement_model_with_loads(
                {s.true_vx, s.true_vy, s.true_yawrate}, input, truth, loads);
            sq_sum[0] += (s.meas_vx - clean.vx) * (s.meas_vx - clean.vx);
            sq_sum[1] += (s.meas_ay - clean.ay) * (s.meas_ay - clean.ay);
            sq_sum[2] += (s.meas_yawrate - clean.yaw_rate) * (s.meas_yawrate - clean.yaw_rate);
        }
        const Eigen::Vector3d std_hat =
            (sq_sum / static_cast<double>(man.samples.size())).cwiseSqrt();
        for (int i = 0; i < 3; ++i) {
            CHECK(std_hat[i] == doctest::Approx(cfg.noise_std[i]).epsilon(0.10));
        }
    }

    TEST_CASE("skidpad settles into a moderate sideslip band")
    {
        ScenarioConfig cfg;
        cfg.kind = ManoeuvreKind::skidpad;
        cfg.duration = 20.0;
        cfg.speed = 15.0;
        cfg.steer_amplitude = 0.04;
        const Manoeuvre man = generate(cfg, VehicleParams{});
        double acc = 0.0;
        std::size_t count = 0;
        for (std::size_t k = 3 * man.samples.size() / 4; k < man.samples.size(); ++k) {
            acc += std::abs(man.samples[k].true_beta);
            ++count;
        }
        const double beta_deg = acc / count * 180.0 / M_PI;
        MESSAGE("skidpad steady-state |beta| [deg]: ", beta_deg);
        CHECK(beta_deg > 0.1);
        CHECK(beta_deg < 6.0);
    }

    TEST_CASE("model mismatch leaves a visible open-loop sideslip gap")
    {
        ScenarioConfig cfg;
        cfg.kind = ManoeuvreKind::slalom;
        cfg.duration = 15.0;
        cfg.speed = 18.0;
        cfg.steer_amplitude = 0.08;
        cfg.noise_std.setZero();
        const Manoeuvre man = generate(cfg, VehicleParams{});

        // Open-loop replay with the filter's nominal model: unscaled
        // stiffnesses, static loads.
        const VehicleParams nominal;
        VehicleState state{man.samples[0].true_vx, man.samples[0].true_vy,
                           man.samples[0].true_yawrate};
        double acc = 0.0;
        for (std::size_t k = 0; k + 1 < man.samples.size(); ++k) {
            const ControlInput input{man.samples[k].steer_angle, man.samples[k].long_accel};
            state = dynamics_step(state, input, nominal, cfg.dt);
            const double e = sideslip(state) - man.samples[k + 1].true_beta;
            acc += e * e;
        }
        const double rmse_deg =
            std::sqrt(acc / (man.samples.size() - 1)) * 180.0 / M_PI;
        MESSAGE("open-loop mismatch rmse [deg]: ", rmse_deg);
        CHECK(rmse_deg > 0.2);
    }

    TEST_CASE("training and test sets have the fixed composition")
    {
        const auto train = training_set_configs(0);
        const auto test = test_set_configs(0);
        REQUIRE(train.size() == 8);
        REQUIRE(test.size() == 23);

        auto census = [](const std::vector<ScenarioConfig>& configs) {
            std::map<ManoeuvreKind, int> counts;
            for (const auto& cfg : configs) {
                ++counts[cfg.kind];
            }
            return counts;
        };
        const auto train_counts = census(train);
        CHECK(train_counts.at(ManoeuvreKind::braking_in_turn) == 1);
        CHECK(train_counts.at(ManoeuvreKind::skidpad) == 1);
        CHECK(train_counts.at(ManoeuvreKind::j_turn) == 2);
        CHECK(train_counts.at(ManoeuvreKind::slalom) == 2);
        CHECK(train_counts.at(ManoeuvreKind::lane_change) == 2);

        const auto test_counts = census(test);
        CHECK(test_counts.at(ManoeuvreKind::braking_in_turn) == 2);
        CHECK(test_counts.at(ManoeuvreKind::skidpad) == 2);
        CHECK(test_counts.at(ManoeuvreKind::j_turn) == 5);
        CHECK(test_counts.at(ManoeuvreKind::slalom) == 4);
        CHECK(test_counts.at(ManoeuvreKind::lane_change) == 4);
        CHECK(test_counts.at(ManoeuvreKind::random_steer) == 2);
        CHECK(test_counts.at(ManoeuvreKind::lap) == 1);
        CHECK(test_counts.at(ManoeuvreKind::spiral) == 3);

        SUBCASE("per-manoeuvre seeds never collide across the split")
        {
            std::set<std::uint64_t> seeds;
            for (const auto& cfg : train) {
                CHECK(seeds.insert(cfg.seed).second);
            }
            for (const auto& cfg : test) {
                CHECK(seeds.insert(cfg.seed).second);
            }
        }
        SUBCASE("every config is valid and speeds sit in the declared ranges")
        {
            for (const auto& cfg : train) {
                cfg.validate();
                CHECK(cfg.speed >= 10.0);
                CHECK(cfg.speed <= 20.0);
            }
            for (const auto& cfg : test) {
                cfg.validate();
            }
        }
    }

    TEST_CASE("realized sets are named by index and kind")
    {
        const auto train = training_set(0, VehicleParams{});
        REQUIRE(train.size() == 8);
        CHECK(train[0].name == "00_braking_in_turn");
        CHECK(train[1].name == "01_skidpad");
        std::set<std::string> names;
        for (const auto& man : train) {
            CHECK(names.insert(man.name).second);
            CHECK(man.samples.size() >= 100);
        }
    }

    TEST_CASE("csv round trip is exact")
    {
        ScenarioConfig cfg;
        cfg.kind = ManoeuvreKind::lane_change;
        cfg.duration = 8.0;
        cfg.seed = 9;
        const Manoeuvre man = generate(cfg, VehicleParams{});
        const auto path = (scratch_dir() / "roundtrip.csv").string();
        save(man, path);
        const Manoeuvre back = load(path);
        CHECK(back.name == "roundtrip");
        CHECK(back.dt == man.dt);
        REQUIRE(back.samples.size() == man.samples.size());
        for (std::size_t k = 0; k < man.samples.size(); ++k) {
            CHECK(back.samples[k].t == man.samples[k].t);
            CHECK(back.samples[k].meas_ay == man.samples[k].meas_ay);
            CHECK(back.samples[k].true_vy == man.samples[k].true_vy);
            CHECK(back.samples[k].true_beta == man.samples[k].true_beta);
        }
    }

    TEST_CASE("malformed csv files are rejected with a line number")
    {
        const auto dir = scratch_dir();

        SUBCASE("bad header")
        {
            const auto path = (dir / "bad_header.csv").string();
            std::ofstream(path) << "time,steer\n0,0\n";
            CHECK_THROWS_WITH_AS(load(path), doctest::Contains("line 1"), DataError);
        }
        SUBCASE("truncated row")
        {
            ScenarioConfig cfg;
            cfg.kind = ManoeuvreKind::slalom;
            cfg.duration = 2.0;
            const Manoeuvre man = generate(cfg, VehicleParams{});
            const auto good = (dir / "good.csv").string();
            save(man, good);
            std::string text = read_text_file(good);
            // Chop the last field off data line 5 (file line 6).
            std::size_t line_start = 0;
            for (int i = 0; i < 5; ++i) {
                line_start = text.find('\n', line_start) + 1;
            }
            const std::size_t line_end = text.find('\n', line_start);
            const std::size_t last_comma = text.rfind(',', line_end);
            text = text.substr(0, last_comma) + text.substr(line_end);
            const auto path = (dir / "truncated.csv").string();
            std::ofstream(path) << text;
            CHECK_THROWS_WITH_AS(load(path), doctest::Contains("line 6"), DataError);
        }
        SUBCASE("non-uniform time grid")
        {
            ScenarioConfig cfg;
            cfg.kind = ManoeuvreKind::slalom;
            cfg.duration = 2.0;
            Manoeuvre man = generate(cfg, VehicleParams{});
            man.samples[50].t += 0.004;
            const auto path = (dir / "jitter.csv").string();
            save(man, path);
            CHECK_THROWS_AS(load(path), DataError);
        }
        SUBCASE("unparseable number")
        {
            const auto path = (dir / "nonnum.csv").string();
            std::ofstream out(path);
            out << "t,steer_angle,long_accel,meas_vx,meas_ay,meas_yawrate,"
                   "true_vx,true_vy,true_yawrate,true_beta\n";
            out << "0,0,0,15,0,0,15,0,0,0\n";
            out << "0.01,0,0,abc,0,0,15,0,0,0\n";
            out.close();
            CHECK_THROWS_WITH_AS(load(path), doctest::Contains("line 3"), DataError);
        }
    }
}
