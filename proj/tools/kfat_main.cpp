#include "kfat/errors.hpp"
#include "kfat/evaluation.hpp"
#include "kfat/ga.hpp"
#include "kfat/io.hpp"
#include "kfat/scenario.hpp"
#include "kfat/tsbo.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace kfat;

namespace {

constexpr int kSchemaVersion = 1;

std::uint64_t fnv1a(std::string_view bytes)
{
    std::uint64_t h = 1469598103934665603ULL;
    for (const char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hash_hex(std::uint64_t h)
{
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

ordered_json parse_json_file(const std::string& path)
{
    ordered_json doc;
    try {
        doc = ordered_json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
    if (!doc.is_object()) {
        throw DataError(path + ": expected a JSON object");
    }
    if (doc.contains("schema_version")) {
        const auto& v = doc["schema_version"];
        if (!v.is_number_integer() || v.get<int>() != kSchemaVersion) {
            throw DataError(path + ": unsupported schema_version (expected " +
                            std::to_string(kSchemaVersion) + ")");
        }
    }
    return doc;
}

void reject_unknown_keys(const ordered_json& obj, const std::string& where,
                         std::initializer_list<const char*> allowed)
{
    for (const auto& item : obj.items()) {
        const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) {
            return item.key() == k;
        });
        if (!known) {
            throw DataError(where + ": unknown key \"" + item.key() + "\"");
        }
    }
}

double as_number(const ordered_json& v, const std::string& where)
{
    if (!v.is_number()) {
        throw DataError(where + ": expected a number");
    }
    return v.get<double>();
}

Eigen::Vector3d as_vector3(const ordered_json& v, const std::string& where)
{
    if (!v.is_array() || v.size() != 3) {
        throw DataError(where + ": expected an array of 3 numbers");
    }
    Eigen::Vector3d out;
    for (int i = 0; i < 3; ++i) {
        out(i) = as_number(v[static_cast<std::size_t>(i)], where);
    }
    return out;
}

// Everything a command can be configured with; config files override the
// library defaults section by section, key by key.
struct AppConfig {
    VehicleParams vehicle;
    UkfConfig ukf;
    Eigen::Vector3d noise_std{0.1, 0.15, 0.005};
    MismatchSpec mismatch;
    CostWeights weights;
    TsboConfig tsbo;
    GaConfig ga;
    BoxSpace space = BoxSpace::default_q_space();
    bool explicit_noise_std = false;
    bool explicit_vehicle = false;
};

void apply_vehicle(const ordered_json& sec, const std::string& where, VehicleParams& p)
{
    reject_unknown_keys(sec, where,
                        {"mass", "yaw_inertia", "dist_front_axle", "dist_rear_axle",
                         "cornering_stiffness_front", "cornering_stiffness_rear",
                         "friction_coeff", "gravity"});
    if (sec.contains("mass")) p.mass = as_number(sec["mass"], where + ".mass");
    if (sec.contains("yaw_inertia")) p.yaw_inertia = as_number(sec["yaw_inertia"], where + ".yaw_inertia");
    if (sec.contains("dist_front_axle")) p.dist_front_axle = as_number(sec["dist_front_axle"], where + ".dist_front_axle");
    if (sec.contains("dist_rear_axle")) p.dist_rear_axle = as_number(sec["dist_rear_axle"], where + ".dist_rear_axle");
    if (sec.contains("cornering_stiffness_front")) p.cornering_stiffness_front = as_number(sec["cornering_stiffness_front"], where + ".cornering_stiffness_front");
    if (sec.contains("cornering_stiffness_rear")) p.cornering_stiffness_rear = as_number(sec["cornering_stiffness_rear"], where + ".cornering_stiffness_rear");
    if (sec.contains("friction_coeff")) p.friction_coeff = as_number(sec["friction_coeff"], where + ".friction_coeff");
    if (sec.contains("gravity")) p.gravity = as_number(sec["gravity"], where + ".gravity");
}

AppConfig load_config(const std::string& path)
{
    AppConfig cfg;
    if (path.empty()) {
        return cfg;
    }
    const ordered_json doc = parse_json_file(path);
    reject_unknown_keys(doc, path,
                        {"schema_version", "vehicle", "ukf", "noise_std", "mismatch",
                         "weights", "tsbo", "ga", "space"});

    if (doc.contains("vehicle")) {
        apply_vehicle(doc["vehicle"], path + ": vehicle", cfg.vehicle);
        cfg.explicit_vehicle = true;
    }
    if (doc.contains("ukf")) {
        const auto& sec = doc["ukf"];
        const std::string where = path + ": ukf";
        reject_unknown_keys(sec, where, {"sigma_scaling", "beta_prior", "kappa"});
        if (sec.contains("sigma_scaling")) cfg.ukf.sigma_scaling = as_number(sec["sigma_scaling"], where + ".sigma_scaling");
        if (sec.contains("beta_prior")) cfg.ukf.beta_prior = as_number(sec["beta_prior"], where + ".beta_prior");
        if (sec.contains("kappa")) cfg.ukf.kappa = as_number(sec["kappa"], where + ".kappa");
    }
    if (doc.contains("noise_std")) {
        cfg.noise_std = as_vector3(doc["noise_std"], path + ": noise_std");
        cfg.explicit_noise_std = true;
    }
    if (doc.contains("mismatch")) {
        const auto& sec = doc["mismatch"];
        const std::string where = path + ": mismatch";
        reject_unknown_keys(sec, where,
                            {"stiffness_scale_front", "stiffness_scale_rear", "load_transfer",
                             "cg_height"});
        if (sec.contains("stiffness_scale_front")) cfg.mismatch.stiffness_scale_front = as_number(sec["stiffness_scale_front"], where + ".stiffness_scale_front");
        if (sec.contains("stiffness_scale_rear")) cfg.mismatch.stiffness_scale_rear = as_number(sec["stiffness_scale_rear"], where + ".stiffness_scale_rear");
        if (sec.contains("cg_height")) cfg.mismatch.cg_height = as_number(sec["cg_height"], where + ".cg_height");
        if (sec.contains("load_transfer")) {
            if (!sec["load_transfer"].is_boolean()) {
                throw DataError(where + ".load_transfer: expected a boolean");
            }
            cfg.mismatch.load_transfer = sec["load_transfer"].get<bool>();
        }
    }
    if (doc.contains("weights")) {
        const auto& sec = doc["weights"];
        const std::string where = path + ": weights";
        reject_unknown_keys(sec, where, {"w_beta", "w_yawrate", "w_ay"});
        if (sec.contains("w_beta")) cfg.weights.w_beta = as_number(sec["w_beta"], where + ".w_beta");
        if (sec.contains("w_yawrate")) cfg.weights.w_yawrate = as_number(sec["w_yawrate"], where + ".w_yawrate");
        if (sec.contains("w_ay")) cfg.weights.w_ay = as_number(sec["w_ay"], where + ".w_ay");
    }
    if (doc.contains("tsbo")) {
        const auto& sec = doc["tsbo"];
        const std::string where = path + ": tsbo";
        reject_unknown_keys(sec, where,
                            {"max_fe", "max_pe", "max_sm", "max_af", "tr_fe_factor", "beta",
                             "alpha", "dof"});
        if (sec.contains("max_fe")) cfg.tsbo.max_fe = static_cast<int>(as_number(sec["max_fe"], where + ".max_fe"));
        if (sec.contains("max_pe")) cfg.tsbo.max_pe = static_cast<int>(as_number(sec["max_pe"], where + ".max_pe"));
        if (sec.contains("max_sm")) cfg.tsbo.max_sm = static_cast<int>(as_number(sec["max_sm"], where + ".max_sm"));
        if (sec.contains("max_af")) cfg.tsbo.max_af = static_cast<int>(as_number(sec["max_af"], where + ".max_af"));
        if (sec.contains("tr_fe_factor")) cfg.tsbo.tr_fe_factor = as_number(sec["tr_fe_factor"], where + ".tr_fe_factor");
        if (sec.contains("beta")) cfg.tsbo.beta = as_number(sec["beta"], where + ".beta");
        if (sec.contains("alpha")) cfg.tsbo.alpha = as_number(sec["alpha"], where + ".alpha");
        if (sec.contains("dof")) cfg.tsbo.dof = as_number(sec["dof"], where + ".dof");
    }
    if (doc.contains("ga")) {
        const auto& sec = doc["ga"];
        const std::string where = path + ": ga";
        reject_unknown_keys(sec, where,
                            {"population_size", "max_generations", "elite_fraction",
                             "crossover_fraction", "mutation_std"});
        if (sec.contains("population_size")) cfg.ga.population_size = static_cast<int>(as_number(sec["population_size"], where + ".population_size"));
        if (sec.contains("max_generations")) cfg.ga.max_generations = static_cast<int>(as_number(sec["max_generations"], where + ".max_generations"));
        if (sec.contains("elite_fraction")) cfg.ga.elite_fraction = as_number(sec["elite_fraction"], where + ".elite_fraction");
        if (sec.contains("crossover_fraction")) cfg.ga.crossover_fraction = as_number(sec["crossover_fraction"], where + ".crossover_fraction");
        if (sec.contains("mutation_std")) cfg.ga.mutation_std = as_number(sec["mutation_std"], where + ".mutation_std");
    }
    if (doc.contains("space")) {
        const auto& sec = doc["space"];
        const std::string where = path + ": space";
        reject_unknown_keys(sec, where, {"lower", "upper", "scale"});
        if (!sec.contains("lower") || !sec.contains("upper") || !sec.contains("scale")) {
            throw DataError(where + ": needs lower, upper, and scale");
        }
        const auto& lo = sec["lower"];
        const auto& hi = sec["upper"];
        const auto& sc = sec["scale"];
        if (!lo.is_array() || !hi.is_array() || !sc.is_array() || lo.size() != hi.size() ||
            lo.size() != sc.size() || lo.empty()) {
            throw DataError(where + ": lower, upper, and scale must be equal-length arrays");
        }
        const int d = static_cast<int>(lo.size());
        cfg.space.lower.resize(d);
        cfg.space.upper.resize(d);
        cfg.space.scales.resize(static_cast<std::size_t>(d));
        for (int i = 0; i < d; ++i) {
            const auto idx = static_cast<std::size_t>(i);
            cfg.space.lower(i) = as_number(lo[idx], where + ".lower");
            cfg.space.upper(i) = as_number(hi[idx], where + ".upper");
            const std::string s = sc[idx].is_string() ? sc[idx].get<std::string>() : "";
            if (s == "linear") {
                cfg.space.scales[idx] = AxisScale::linear;
            } else if (s == "log10") {
                cfg.space.scales[idx] = AxisScale::log10;
            } else {
                throw DataError(where + ".scale: entries must be \"linear\" or \"log10\"");
            }
        }
    }

    cfg.vehicle.validate();
    cfg.weights.validate();
    cfg.tsbo.weights = cfg.weights;
    cfg.tsbo.validate();
    cfg.ga.validate();
    cfg.space.validate();
    return cfg;
}

// ---------------------------------------------------------------------------
// dataset directory

struct Dataset {
    fs::path root;
    bool has_manifest = false;
    std::string manifest_hash;
    std::optional<Eigen::Vector3d> manifest_noise_std;
    std::optional<VehicleParams> manifest_vehicle;
    std::vector<Manoeuvre> train;
    std::vector<Manoeuvre> test;
    std::vector<Manoeuvre> loose; // CSVs sitting directly in the root
};

std::vector<Manoeuvre> load_listed(const ordered_json& list, const fs::path& root,
                                   const std::string& where)
{
    std::vector<Manoeuvre> out;
    if (!list.is_array()) {
        throw DataError(where + ": expected an array");
    }
    out.reserve(list.size());
    for (const auto& entry : list) {
        if (!entry.is_object() || !entry.contains("file") || !entry["file"].is_string()) {
            throw DataError(where + ": every entry needs a \"file\" string");
        }
        out.push_back(load((root / entry["file"].get<std::string>()).string()));
    }
    return out;
}

std::vector<Manoeuvre> load_directory(const fs::path& dir)
{
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".csv") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::vector<Manoeuvre> out;
    out.reserve(files.size());
    for (const auto& f : files) {
        out.push_back(load(f.string()));
    }
    return out;
}

Dataset open_dataset(const std::string& root_str)
{
    Dataset ds;
    ds.root = root_str;
    const fs::path mpath = ds.root / "manifest.json";
    if (fs::exists(mpath)) {
        const std::string bytes = read_text_file(mpath.string());
        ds.manifest_hash = hash_hex(fnv1a(bytes));
        ds.has_manifest = true;
        ordered_json man;
        try {
            man = ordered_json::parse(bytes);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(mpath.string() + ": " + e.what());
        }
        if (!man.is_object()) {
            throw DataError(mpath.string() + ": expected a JSON object");
        }
        if (man.contains("noise_std")) {
            ds.manifest_noise_std = as_vector3(man["noise_std"], mpath.string() + ": noise_std");
        }
        if (man.contains("vehicle")) {
            VehicleParams p;
            apply_vehicle(man["vehicle"], mpath.string() + ": vehicle", p);
            ds.manifest_vehicle = p;
        }
        if (man.contains("train")) {
            ds.train = load_listed(man["train"], ds.root, mpath.string() + ": train");
        }
        if (man.contains("test")) {
            ds.test = load_listed(man["test"], ds.root, mpath.string() + ": test");
        }
        return ds;
    }
    if (fs::is_directory(ds.root / "train")) {
        ds.train = load_directory(ds.root / "train");
    }
    if (fs::is_directory(ds.root / "test")) {
        ds.test = load_directory(ds.root / "test");
    }
    if (ds.train.empty() && ds.test.empty()) {
        ds.loose = load_directory(ds.root);
    }
    return ds;
}

// The filter is configured from the dataset's own record of how it was made;
// an explicit config section still wins over the manifest.
EvalContext make_context(const AppConfig& cfg, const Dataset& ds, double dt)
{
    EvalContext ctx;
    ctx.params = cfg.vehicle;
    if (!cfg.explicit_vehicle && ds.manifest_vehicle) {
        ctx.params = *ds.manifest_vehicle;
    }
    Eigen::Vector3d sd = cfg.noise_std;
    if (!cfg.explicit_noise_std && ds.manifest_noise_std) {
        sd = *ds.manifest_noise_std;
    }
    for (int i = 0; i < 3; ++i) {
        // Noise-free datasets would give a singular observation covariance.
        ctx.noise.observation_noise_diag(i) = std::max(sd(i) * sd(i), 1e-12);
    }
    ctx.ukf = cfg.ukf;
    ctx.ukf.dt = dt;
    return ctx;
}

// ---------------------------------------------------------------------------
// shared JSON fragments

ordered_json vector_json(const Eigen::VectorXd& v)
{
    ordered_json arr = ordered_json::array();
    for (int i = 0; i < v.size(); ++i) {
        arr.push_back(v(i));
    }
    return arr;
}

ordered_json optional_json(const std::optional<double>& v)
{
    return v ? ordered_json(*v) : ordered_json(nullptr);
}

ordered_json kpi_json(const KpiReport& rep)
{
    ordered_json doc;
    doc["rmse_deg"] = rep.rmse_deg;
    doc["mae_deg"] = rep.mae_deg;
    doc["rmse_non_deg"] = optional_json(rep.rmse_non_deg);
    doc["mae_non_deg"] = optional_json(rep.mae_non_deg);
    ordered_json per = ordered_json::array();
    for (const auto& m : rep.per_manoeuvre) {
        ordered_json row;
        row["name"] = m.name;
        row["rmse_deg"] = m.rmse_deg;
        row["mae_deg"] = m.mae_deg;
        row["rmse_non_deg"] = optional_json(m.rmse_non_deg);
        row["mae_non_deg"] = optional_json(m.mae_non_deg);
        row["diverged"] = m.diverged;
        per.push_back(std::move(row));
    }
    doc["per_manoeuvre"] = std::move(per);
    return doc;
}

ordered_json surrogate_json(const SurrogateModel& model)
{
    ordered_json doc;
    doc["kind"] = model.kind == SurrogateKind::tsp ? "tsp" : "gp";
    doc["dof"] = model.dof;
    doc["signal_std"] = model.hyper.signal_std;
    doc["length_scales"] = vector_json(model.hyper.length_scales);
    doc["noise_floor"] = model.noise_floor;
    doc["center"] = model.center;
    ordered_json points = ordered_json::array();
    ordered_json values = ordered_json::array();
    for (std::size_t i = 0; i < model.obs.size(); ++i) {
        points.push_back(vector_json(model.obs.points.row(static_cast<Eigen::Index>(i)).transpose()));
        values.push_back(model.obs.values(static_cast<Eigen::Index>(i)));
    }
    doc["points"] = std::move(points);
    doc["values"] = std::move(values);
    return doc;
}

std::string dump_json(const ordered_json& doc)
{
    return doc.dump(2) + "\n";
}

// result.json gets a sibling result.csv; an --out that already ends in .csv
// keeps both apart with a longer suffix.
fs::path sibling_csv(const std::string& out)
{
    fs::path csv(out);
    csv.replace_extension(".csv");
    if (csv == fs::path(out)) {
        csv = fs::path(out + ".table.csv");
    }
    return csv;
}

void write_trace_csv(const fs::path& path, const std::vector<EvalRecord>& trace)
{
    const int d = trace.empty() ? 0 : static_cast<int>(trace.front().q.size());
    std::string out = "iter,stage,af";
    for (int i = 1; i <= d; ++i) {
        out += ",q" + std::to_string(i);
    }
    out += ",J,best_J\n";
    for (const auto& rec : trace) {
        out += std::to_string(rec.iter);
        out += ',';
        out += std::to_string(rec.stage);
        out += ',';
        out += rec.af;
        for (int i = 0; i < d; ++i) {
            out += ',';
            out += format_double(rec.q(i));
        }
        out += ',';
        out += format_double(rec.j);
        out += ',';
        out += format_double(rec.best_j);
        out += '\n';
    }
    write_text_file(path.string(), out);
}

void print_kpi_line(const KpiReport& rep)
{
    auto opt = [](const std::optional<double>& v) {
        if (!v) {
            return std::string("n/a");
        }
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4f", *v);
        return std::string(buf);
    };
    std::printf("RMSE %.4f deg  MAE %.4f deg  RMSE_non %s deg  MAE_non %s deg\n", rep.rmse_deg,
                rep.mae_deg, opt(rep.rmse_non_deg).c_str(), opt(rep.mae_non_deg).c_str());
}

// ---------------------------------------------------------------------------
// gen-data

struct GenDataArgs {
    std::string out;
    std::string config;
    std::uint64_t seed = 0;
    bool force = false;
};

ordered_json set_manifest(const std::vector<ScenarioConfig>& cfgs,
                          const std::vector<Manoeuvre>& set, const std::string& subdir)
{
    ordered_json list = ordered_json::array();
    for (std::size_t i = 0; i < cfgs.size(); ++i) {
        ordered_json entry;
        entry["file"] = subdir + "/" + set[i].name + ".csv";
        entry["kind"] = kind_name(cfgs[i].kind);
        entry["seed"] = cfgs[i].seed;
        entry["duration"] = cfgs[i].duration;
        entry["dt"] = cfgs[i].dt;
        entry["speed"] = cfgs[i].speed;
        entry["steer_amplitude"] = cfgs[i].steer_amplitude;
        list.push_back(std::move(entry));
    }
    return list;
}

int run_gen_data(const GenDataArgs& args)
{
    const AppConfig cfg = load_config(args.config);
    const fs::path root(args.out);
    if (fs::exists(root) && !fs::is_empty(root) && !args.force) {
        throw DataError(args.out + " is not empty; pass --force to write into it");
    }
    fs::create_directories(root / "train");
    fs::create_directories(root / "test");

    std::vector<ScenarioConfig> train_cfgs = training_set_configs(args.seed);
    std::vector<ScenarioConfig> test_cfgs = test_set_configs(args.seed);
    for (auto* cfgs : {&train_cfgs, &test_cfgs}) {
        for (auto& c : *cfgs) {
            c.noise_std = cfg.noise_std;
            c.mismatch = cfg.mismatch;
        }
    }

    const std::vector<Manoeuvre> train = realize_set(train_cfgs, cfg.vehicle, 0);
    const std::vector<Manoeuvre> test = realize_set(test_cfgs, cfg.vehicle, train_cfgs.size());
    for (const auto& man : train) {
        save(man, (root / "train" / (man.name + ".csv")).string());
    }
    for (const auto& man : test) {
        save(man, (root / "test" / (man.name + ".csv")).string());
    }

    ordered_json manifest;
    manifest["schema_version"] = kSchemaVersion;
    manifest["seed"] = args.seed;
    manifest["noise_std"] = vector_json(cfg.noise_std);
    ordered_json mm;
    mm["stiffness_scale_front"] = cfg.mismatch.stiffness_scale_front;
    mm["stiffness_scale_rear"] = cfg.mismatch.stiffness_scale_rear;
    mm["load_transfer"] = cfg.mismatch.load_transfer;
    mm["cg_height"] = cfg.mismatch.cg_height;
    manifest["mismatch"] = std::move(mm);
    ordered_json veh;
    veh["mass"] = cfg.vehicle.mass;
    veh["yaw_inertia"] = cfg.vehicle.yaw_inertia;
    veh["dist_front_axle"] = cfg.vehicle.dist_front_axle;
    veh["dist_rear_axle"] = cfg.vehicle.dist_rear_axle;
    veh["cornering_stiffness_front"] = cfg.vehicle.cornering_stiffness_front;
    veh["cornering_stiffness_rear"] = cfg.vehicle.cornering_stiffness_rear;
    veh["friction_coeff"] = cfg.vehicle.friction_coeff;
    veh["gravity"] = cfg.vehicle.gravity;
    manifest["vehicle"] = std::move(veh);
    manifest["train"] = set_manifest(train_cfgs, train, "train");
    manifest["test"] = set_manifest(test_cfgs, test, "test");
    write_text_file((root / "manifest.json").string(), dump_json(manifest));

    std::printf("wrote %zu training and %zu test manoeuvres under %s\n", train.size(),
                test.size(), args.out.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// tune

struct TuneArgs {
    std::string method;
    std::string data;
    std::string out;
    std::string config;
    std::uint64_t seed = 0;
};

int run_tune(const TuneArgs& args)
{
    AppConfig cfg = load_config(args.config);
    if (cfg.space.dim() != 3) {
        throw ConfigError("the tuning objective expects a 3-dimensional search space");
    }
    const Dataset ds = open_dataset(args.data);
    if (ds.train.empty()) {
        throw DataError(args.data + ": no training manoeuvres found");
    }
    const EvalContext ctx = make_context(cfg, ds, ds.train.front().dt);

    const Objective objective = [&](const Eigen::VectorXd& q) {
        return cost(Eigen::Vector3d(q), ds.train, cfg.weights, ctx);
    };

    TuningResult result;
    if (args.method == "ga") {
        GaConfig ga_cfg = cfg.ga;
        ga_cfg.seed = args.seed;
        result = ga_minimize(objective, cfg.space, ga_cfg);
    } else {
        TsboConfig tsbo_cfg = cfg.tsbo;
        tsbo_cfg.weights = cfg.weights;
        tsbo_cfg.seed = args.seed;
        const SurrogateKind kind =
            args.method == "tsbo-tsp" ? SurrogateKind::tsp : SurrogateKind::gp;
        result = tune(objective, cfg.space, tsbo_cfg, kind);
    }

    std::optional<KpiReport> test_kpi;
    if (!ds.test.empty()) {
        test_kpi = kpi_report(Eigen::Vector3d(result.best_q), ds.test, ctx);
    }

    ordered_json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["method"] = result.method;
    doc["seed"] = args.seed;
    ordered_json dataset;
    dataset["manifest_hash"] = ds.manifest_hash;
    doc["dataset"] = std::move(dataset);
    doc["best_q"] = vector_json(result.best_q);
    doc["best_j"] = result.best_j;
    doc["evals_stage1"] = result.evals_stage1;
    doc["evals_stage2"] = result.evals_stage2;
    doc["surrogate_refits"] = result.surrogate_refits;
    doc["wall_time_s"] = result.wall_time_s;
    doc["test_kpi"] = test_kpi ? kpi_json(*test_kpi) : ordered_json(nullptr);
    doc["surrogate"] = result.surrogate ? surrogate_json(*result.surrogate) : ordered_json(nullptr);
    ordered_json trace = ordered_json::array();
    for (const auto& rec : result.trace) {
        ordered_json row;
        row["iter"] = rec.iter;
        row["stage"] = rec.stage;
        row["af"] = rec.af;
        row["q"] = vector_json(rec.q);
        row["j"] = rec.j;
        row["best_j"] = rec.best_j;
        trace.push_back(std::move(row));
    }
    doc["trace"] = std::move(trace);

    write_text_file(args.out, dump_json(doc));
    const fs::path csv = sibling_csv(args.out);
    write_trace_csv(csv, result.trace);

    std::printf("%s  seed %llu\n", result.method.c_str(),
                static_cast<unsigned long long>(args.seed));
    std::printf("best J %.6f at q = [%.6g, %.6g, %.6g]\n", result.best_j, result.best_q(0),
                result.best_q(1), result.best_q(2));
    std::printf("evaluations %zu (stage 1: %d, stage 2: %d)  refits %d  wall time %.1f s\n",
                result.trace.size(), result.evals_stage1, result.evals_stage2,
                result.surrogate_refits, result.wall_time_s);
    if (test_kpi) {
        std::printf("test set: ");
        print_kpi_line(*test_kpi);
    }
    std::printf("wrote %s and %s\n", args.out.c_str(), csv.string().c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
    std::string params;
    std::string data;
    std::string out;
};

int run_evaluate(const EvaluateArgs& args)
{
    const ordered_json pdoc = parse_json_file(args.params);
    Eigen::Vector3d q;
    if (pdoc.contains("best_q")) {
        q = as_vector3(pdoc["best_q"], args.params + ": best_q");
    } else if (pdoc.contains("q")) {
        q = as_vector3(pdoc["q"], args.params + ": q");
    } else {
        throw DataError(args.params + ": needs a \"q\" or \"best_q\" array");
    }

    const Dataset ds = open_dataset(args.data);
    const std::vector<Manoeuvre>& set =
        !ds.test.empty() ? ds.test : (!ds.train.empty() ? ds.train : ds.loose);
    if (set.empty()) {
        throw DataError(args.data + ": no manoeuvres found");
    }
    const EvalContext ctx = make_context(AppConfig{}, ds, set.front().dt);
    const KpiReport rep = kpi_report(q, set, ctx);

    ordered_json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["params"] = vector_json(q);
    ordered_json dataset;
    dataset["manifest_hash"] = ds.manifest_hash;
    doc["dataset"] = std::move(dataset);
    doc["manoeuvre_count"] = set.size();
    doc["kpi"] = kpi_json(rep);
    write_text_file(args.out, dump_json(doc));

    std::string csv = "name,rmse_deg,mae_deg,rmse_non_deg,mae_non_deg,diverged\n";
    for (const auto& m : rep.per_manoeuvre) {
        csv += m.name;
        csv += ',';
        csv += format_double(m.rmse_deg);
        csv += ',';
        csv += format_double(m.mae_deg);
        csv += ',';
        csv += m.rmse_non_deg ? format_double(*m.rmse_non_deg) : "";
        csv += ',';
        csv += m.mae_non_deg ? format_double(*m.mae_non_deg) : "";
        csv += ',';
        csv += m.diverged ? '1' : '0';
        csv += '\n';
    }
    const fs::path csv_path = sibling_csv(args.out);
    write_text_file(csv_path.string(), csv);

    std::printf("%zu manoeuvres: ", set.size());
    print_kpi_line(rep);
    std::printf("wrote %s and %s\n", args.out.c_str(), csv_path.string().c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// compare

struct CompareArgs {
    std::vector<std::string> results;
    std::string out;
};

struct ResultSummary {
    std::string file;
    std::string method;
    std::string manifest_hash;
    double best_j = 0.0;
    int evaluations = 0;
    double wall_time_s = 0.0;
    std::optional<double> rmse_deg;
    std::optional<double> mae_deg;
};

ResultSummary read_result(const std::string& path)
{
    const ordered_json doc = parse_json_file(path);
    for (const char* key : {"method", "best_j", "evals_stage1", "evals_stage2", "wall_time_s"}) {
        if (!doc.contains(key)) {
            throw DataError(path + ": missing \"" + key + "\" (not a tune result?)");
        }
    }
    ResultSummary s;
    s.file = path;
    s.method = doc["method"].get<std::string>();
    s.best_j = as_number(doc["best_j"], path + ": best_j");
    s.evaluations = static_cast<int>(as_number(doc["evals_stage1"], path) +
                                     as_number(doc["evals_stage2"], path));
    s.wall_time_s = as_number(doc["wall_time_s"], path + ": wall_time_s");
    if (doc.contains("dataset") && doc["dataset"].is_object() &&
        doc["dataset"].contains("manifest_hash")) {
        s.manifest_hash = doc["dataset"]["manifest_hash"].get<std::string>();
    }
    if (doc.contains("test_kpi") && doc["test_kpi"].is_object()) {
        const auto& kpi = doc["test_kpi"];
        if (kpi.contains("rmse_deg") && kpi["rmse_deg"].is_number()) {
            s.rmse_deg = kpi["rmse_deg"].get<double>();
        }
        if (kpi.contains("mae_deg") && kpi["mae_deg"].is_number()) {
            s.mae_deg = kpi["mae_deg"].get<double>();
        }
    }
    return s;
}

// Relative improvement of value over base, in percent; positive means better
// (smaller) than the baseline.
ordered_json improvement_pct(double base, double value)
{
    if (base == 0.0) {
        return value == 0.0 ? ordered_json(0.0) : ordered_json(nullptr);
    }
    return 100.0 * (base - value) / base;
}

int run_compare(const CompareArgs& args)
{
    if (args.results.size() < 2) {
        throw DataError("compare needs at least two result files");
    }
    std::vector<ResultSummary> entries;
    entries.reserve(args.results.size());
    for (const auto& path : args.results) {
        entries.push_back(read_result(path));
    }
    for (const auto& e : entries) {
        if (e.manifest_hash != entries.front().manifest_hash) {
            throw DataError(e.file + ": produced from a different dataset than " +
                            entries.front().file);
        }
    }

    const ResultSummary& base = entries.front();
    ordered_json doc;
    doc["schema_version"] = kSchemaVersion;
    ordered_json dataset;
    dataset["manifest_hash"] = base.manifest_hash;
    doc["dataset"] = std::move(dataset);
    doc["baseline"] = base.method;
    ordered_json list = ordered_json::array();
    for (const auto& e : entries) {
        ordered_json row;
        row["file"] = e.file;
        row["method"] = e.method;
        row["best_j"] = e.best_j;
        row["evaluations"] = e.evaluations;
        row["wall_time_s"] = e.wall_time_s;
        row["rmse_deg"] = optional_json(e.rmse_deg);
        row["mae_deg"] = optional_json(e.mae_deg);
        list.push_back(std::move(row));
    }
    doc["entries"] = std::move(list);
    ordered_json deltas = ordered_json::array();
    for (std::size_t i = 1; i < entries.size(); ++i) {
        const ResultSummary& e = entries[i];
        ordered_json row;
        row["method"] = e.method;
        row["vs"] = base.method;
        row["best_j_improvement_pct"] = improvement_pct(base.best_j, e.best_j);
        row["evaluation_reduction_pct"] = improvement_pct(base.evaluations, e.evaluations);
        row["wall_time_reduction_pct"] = improvement_pct(base.wall_time_s, e.wall_time_s);
        row["rmse_improvement_pct"] = base.rmse_deg && e.rmse_deg
                                          ? improvement_pct(*base.rmse_deg, *e.rmse_deg)
                                          : ordered_json(nullptr);
        row["mae_improvement_pct"] = base.mae_deg && e.mae_deg
                                         ? improvement_pct(*base.mae_deg, *e.mae_deg)
                                         : ordered_json(nullptr);
        deltas.push_back(std::move(row));
    }
    doc["deltas"] = std::move(deltas);
    write_text_file(args.out, dump_json(doc));

    std::printf("%-10s %12s %8s %10s %10s\n", "method", "best J", "evals", "wall s",
                "RMSE deg");
    for (const auto& e : entries) {
        char rmse[32] = "n/a";
        if (e.rmse_deg) {
            std::snprintf(rmse, sizeof(rmse), "%.4f", *e.rmse_deg);
        }
        std::printf("%-10s %12.6f %8d %10.1f %10s\n", e.method.c_str(), e.best_j,
                    e.evaluations, e.wall_time_s, rmse);
    }
    std::printf("wrote %s\n", args.out.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// inspect-surrogate

struct InspectArgs {
    std::string result;
    std::string out;
};

int run_inspect(const InspectArgs& args)
{
    const ordered_json doc = parse_json_file(args.result);
    if (!doc.contains("surrogate") || !doc["surrogate"].is_object()) {
        throw DataError(args.result + ": no surrogate stored (GA results have none)");
    }
    const ordered_json& sur = doc["surrogate"];
    const auto n = sur.contains("values") ? sur["values"].size() : 0;

    std::printf("kind %s  dof %s\n", sur["kind"].get<std::string>().c_str(),
                sur["dof"].dump().c_str());
    std::printf("signal std %s  length scales %s\n", sur["signal_std"].dump().c_str(),
                sur["length_scales"].dump().c_str());
    std::printf("mean %s  noise floor %s  observations %zu\n", sur["center"].dump().c_str(),
                sur["noise_floor"].dump().c_str(), static_cast<std::size_t>(n));
    if (sur.contains("points")) {
        for (std::size_t i = 0; i < n; ++i) {
            std::string line;
            for (const auto& c : sur["points"][i]) {
                char buf[24];
                std::snprintf(buf, sizeof(buf), "%9.6f ", c.get<double>());
                line += buf;
            }
            std::printf("  %s J %.8g\n", line.c_str(), sur["values"][i].get<double>());
        }
    }
    if (!args.out.empty()) {
        ordered_json dump;
        dump["schema_version"] = kSchemaVersion;
        dump["surrogate"] = sur;
        write_text_file(args.out, dump_json(dump));
        std::printf("wrote %s\n", args.out.c_str());
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"process-noise auto-tuning for a sideslip-estimating UKF"};
    app.require_subcommand(1);

    GenDataArgs gen;
    CLI::App* gen_cmd = app.add_subcommand("gen-data", "generate the synthetic manoeuvre dataset");
    gen_cmd->add_option("--out", gen.out, "output directory")->required();
    gen_cmd->add_option("--seed", gen.seed, "master seed (default 0)");
    gen_cmd->add_option("--config", gen.config, "JSON config overriding defaults")
        ->check(CLI::ExistingFile);
    gen_cmd->add_flag("--force", gen.force, "write into a non-empty directory");

    TuneArgs tune_args;
    CLI::App* tune_cmd = app.add_subcommand("tune", "optimize the process-noise diagonal");
    tune_cmd->add_option("--method", tune_args.method, "optimizer")
        ->required()
        ->check(CLI::IsMember({"tsbo-tsp", "tsbo-gp", "ga"}));
    tune_cmd->add_option("--data", tune_args.data, "dataset directory from gen-data")
        ->required()
        ->check(CLI::ExistingDirectory);
    tune_cmd->add_option("--out", tune_args.out, "result JSON path")->required();
    tune_cmd->add_option("--seed", tune_args.seed, "optimizer seed (default 0)");
    tune_cmd->add_option("--config", tune_args.config, "JSON config overriding defaults")
        ->check(CLI::ExistingFile);

    EvaluateArgs eval_args;
    CLI::App* eval_cmd = app.add_subcommand("evaluate", "score fixed parameters on a dataset");
    eval_cmd->add_option("--params", eval_args.params, "JSON with a q or best_q array")
        ->required()
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--data", eval_args.data, "dataset directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--out", eval_args.out, "KPI report JSON path")->required();

    CompareArgs cmp_args;
    CLI::App* cmp_cmd = app.add_subcommand("compare", "side-by-side report of tune results");
    cmp_cmd->add_option("--results", cmp_args.results, "tune result JSON files")
        ->required()
        ->check(CLI::ExistingFile);
    cmp_cmd->add_option("--out", cmp_args.out, "report JSON path")->required();

    InspectArgs ins_args;
    CLI::App* ins_cmd =
        app.add_subcommand("inspect-surrogate", "print the surrogate stored in a tune result");
    ins_cmd->add_option("--result", ins_args.result, "tune result JSON")
        ->required()
        ->check(CLI::ExistingFile);
    ins_cmd->add_option("--out", ins_args.out, "also write the surrogate as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (gen_cmd->parsed()) return run_gen_data(gen);
        if (tune_cmd->parsed()) return run_tune(tune_args);
        if (eval_cmd->parsed()) return run_evaluate(eval_args);
        if (cmp_cmd->parsed()) return run_compare(cmp_args);
        if (ins_cmd->parsed()) return run_inspect(ins_args);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "kfat: %s\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "kfat: %s\n", e.what());
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::fprintf(stderr, "kfat: %s\n", e.what());
        return 2;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "kfat: %s\n", e.what());
        return 3;
    } catch (const nlohmann::json::exception& e) {
        std::fprintf(stderr, "kfat: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "kfat: %s\n", e.what());
        return 3;
    }
    return 0;
}
