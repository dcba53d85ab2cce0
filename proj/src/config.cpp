#include "accsim/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <map>

#include "accsim/errors.hpp"

namespace accsim {
namespace {

using json = nlohmann::json;

void check_keys(const json& j, const std::string& ctx,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError("'" + ctx + "' must be an object");
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* a : allowed) {
            if (item.key() == a) {
                ok = true;
                break;
            }
        }
        if (!ok) throw ConfigError("unknown key '" + item.key() + "' in " + ctx);
    }
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) {
        try {
            out = j.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(std::string("bad value for '") + key + "'");
        }
    }
}

AttackScenario scenario_from_string(const std::string& s) {
    if (s == "none") return AttackScenario::None;
    if (s == "spike") return AttackScenario::Spike;
    if (s == "reference_bias") return AttackScenario::ReferenceBias;
    throw ConfigError("unknown attack scenario '" + s + "'");
}

std::string scenario_to_string(AttackScenario s) {
    switch (s) {
        case AttackScenario::None: return "none";
        case AttackScenario::Spike: return "spike";
        default: return "reference_bias";
    }
}

EgoDriver driver_from_string(const std::string& s) {
    if (s == "acc") return EgoDriver::Acc;
    if (s == "follow_leader") return EgoDriver::FollowLeader;
    if (s == "optimal_velocity") return EgoDriver::OptimalVelocity;
    if (s == "combined") return EgoDriver::Combined;
    throw ConfigError("unknown ego driver '" + s + "'");
}

std::string driver_to_string(EgoDriver d) {
    switch (d) {
        case EgoDriver::Acc: return "acc";
        case EgoDriver::FollowLeader: return "follow_leader";
        case EgoDriver::OptimalVelocity: return "optimal_velocity";
        default: return "combined";
    }
}

OvmArgument ovm_from_string(const std::string& s) {
    if (s == "relative_velocity") return OvmArgument::RelativeVelocity;
    if (s == "spacing") return OvmArgument::Spacing;
    throw ConfigError("unknown ovm_argument '" + s + "'");
}

void parse_acc(const json& j, AccConfig& acc) {
    check_keys(j, "acc",
               {"v_set", "t_gap", "d_default", "a_min", "a_max", "kp_speed", "kp_space",
                "kd_rel", "mpc"});
    get_if(j, "v_set", acc.v_set);
    get_if(j, "t_gap", acc.t_gap);
    get_if(j, "d_default", acc.d_default);
    get_if(j, "a_min", acc.a_min);
    get_if(j, "a_max", acc.a_max);
    get_if(j, "kp_speed", acc.kp_speed);
    get_if(j, "kp_space", acc.kp_space);
    get_if(j, "kd_rel", acc.kd_rel);
    if (j.contains("mpc")) {
        const json& jm = j.at("mpc");
        check_keys(jm, "acc.mpc", {"horizon_p", "horizon_m", "w_track", "w_du", "w_u"});
        get_if(jm, "horizon_p", acc.mpc.horizon_p);
        get_if(jm, "horizon_m", acc.mpc.horizon_m);
        get_if(jm, "w_track", acc.mpc.w_track);
        get_if(jm, "w_du", acc.mpc.w_du);
        get_if(jm, "w_u", acc.mpc.w_u);
    }
}

void parse_attack(const json& j, AttackSpec& attack) {
    check_keys(j, "attack",
               {"scenario", "t_attack", "spike_amplitude", "spike_duration", "arm_margin",
                "bias_target", "bias_ramp_time"});
    if (j.contains("scenario")) {
        attack.scenario = scenario_from_string(j.at("scenario").get<std::string>());
    }
    get_if(j, "t_attack", attack.t_attack);
    get_if(j, "spike_amplitude", attack.spike_amplitude);
    get_if(j, "spike_duration", attack.spike_duration);
    get_if(j, "arm_margin", attack.arm_margin);
    get_if(j, "bias_target", attack.bias_target);
    get_if(j, "bias_ramp_time", attack.bias_ramp_time);
}

void parse_ids(const json& j, IdsConfig& ids) {
    check_keys(j, "ids",
               {"enabled", "k", "n_consec", "sigma_floor", "ref_tol_m", "calib_start_s",
                "calib_end_s", "n_u", "n_y", "hidden", "epochs", "lambda_init",
                "train_seed", "rmse_cap", "val_fraction"});
    get_if(j, "enabled", ids.enabled);
    get_if(j, "k", ids.k);
    get_if(j, "n_consec", ids.n_consec);
    get_if(j, "sigma_floor", ids.sigma_floor);
    get_if(j, "ref_tol_m", ids.ref_tol_m);
    get_if(j, "calib_start_s", ids.calib_start_s);
    get_if(j, "calib_end_s", ids.calib_end_s);
    get_if(j, "n_u", ids.regressor.n_u);
    get_if(j, "n_y", ids.regressor.n_y);
    get_if(j, "hidden", ids.training.hidden);
    get_if(j, "epochs", ids.training.epochs);
    get_if(j, "lambda_init", ids.training.lambda_init);
    get_if(j, "train_seed", ids.training.seed);
    get_if(j, "rmse_cap", ids.training.rmse_cap);
    get_if(j, "val_fraction", ids.training.val_fraction);
}

void parse_behavior(const json& j, BehaviorParams& b) {
    check_keys(j, "behavior", {"alpha", "beta", "ovm_argument", "fv"});
    get_if(j, "alpha", b.alpha);
    get_if(j, "beta", b.beta);
    if (j.contains("ovm_argument")) {
        b.ovm_argument = ovm_from_string(j.at("ovm_argument").get<std::string>());
    }
    if (j.contains("fv")) {
        const json& jf = j.at("fv");
        check_keys(jf, "behavior.fv", {"offset", "slope", "lo", "hi"});
        get_if(jf, "offset", b.fv.offset);
        get_if(jf, "slope", b.fv.slope);
        get_if(jf, "lo", b.fv.lo);
        get_if(jf, "hi", b.fv.hi);
    }
}

std::vector<LeadProfile::Segment> parse_lead_profile(const json& j) {
    if (!j.is_array()) throw ConfigError("lead_profile must be an array of [t, accel] pairs");
    std::vector<LeadProfile::Segment> segs;
    for (const auto& item : j) {
        if (!item.is_array() || item.size() != 2) {
            throw ConfigError("lead_profile entries must be [t, accel] pairs");
        }
        segs.push_back({item.at(0).get<double>(), item.at(1).get<double>()});
    }
    return segs;
}

}  // namespace

ScenarioFile preset_scenario(const std::string& name) {
    ScenarioFile s;
    s.preset = name;
    if (name == "nominal") {
        s.sim.attack.scenario = AttackScenario::None;
        return s;
    }
    if (name == "attack1_nocomp" || name == "attack1_comp") {
        s.sim.attack.scenario = AttackScenario::Spike;
        s.sim.compensation_enabled = (name == "attack1_comp");
        // Lead pulls away shortly after the spike so the recovered loop has a
        // clean speed-tracking tail instead of riding the mode boundary.
        s.sim.lead_segments = {{0.0, 0.0}, {15.0, -1.0}, {20.0, 0.0}, {42.0, 2.0}, {48.0, 0.0}};
        return s;
    }
    if (name == "attack2_nocomp" || name == "attack2_comp") {
        s.sim.attack.scenario = AttackScenario::ReferenceBias;
        s.sim.compensation_enabled = (name == "attack2_comp");
        // The reference erosion ramps for 60 s from t_attack; leave settling
        // room past the end of the ramp.
        s.sim.duration_s = 110.0;
        return s;
    }
    throw ConfigError("unknown preset '" + name + "'");
}

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names = {
        "nominal", "attack1_nocomp", "attack1_comp", "attack2_nocomp", "attack2_comp"};
    return names;
}

ScenarioFile parse_scenario_json(const json& doc) {
    check_keys(doc, "scenario",
               {"preset", "duration_s", "ts_s", "seed", "initial", "acc", "attack", "ids",
                "compensation", "lead_profile", "noise", "ego_driver", "behavior",
                "output"});
    std::string preset = "nominal";
    if (doc.contains("preset")) preset = doc.at("preset").get<std::string>();
    ScenarioFile s = preset_scenario(preset);

    get_if(doc, "duration_s", s.sim.duration_s);
    get_if(doc, "ts_s", s.sim.ts_s);
    get_if(doc, "seed", s.sim.seed);
    if (doc.contains("initial")) {
        const json& ji = doc.at("initial");
        check_keys(ji, "initial", {"x_lead", "x_ego", "v_lead", "v_ego"});
        get_if(ji, "x_lead", s.sim.x0_lead);
        get_if(ji, "x_ego", s.sim.x0_ego);
        get_if(ji, "v_lead", s.sim.v0_lead);
        get_if(ji, "v_ego", s.sim.v0_ego);
    }
    if (doc.contains("acc")) parse_acc(doc.at("acc"), s.sim.acc);
    if (doc.contains("attack")) parse_attack(doc.at("attack"), s.sim.attack);
    if (doc.contains("ids")) parse_ids(doc.at("ids"), s.sim.ids);
    get_if(doc, "compensation", s.sim.compensation_enabled);
    if (doc.contains("lead_profile")) {
        s.sim.lead_segments = parse_lead_profile(doc.at("lead_profile"));
    }
    if (doc.contains("noise")) {
        const json& jn = doc.at("noise");
        check_keys(jn, "noise", {"vel_std", "dist_std"});
        get_if(jn, "vel_std", s.sim.noise.vel_std);
        get_if(jn, "dist_std", s.sim.noise.dist_std);
    }
    if (doc.contains("ego_driver")) {
        s.sim.ego_driver = driver_from_string(doc.at("ego_driver").get<std::string>());
    }
    if (doc.contains("behavior")) parse_behavior(doc.at("behavior"), s.sim.behavior);
    if (doc.contains("output")) {
        const json& jo = doc.at("output");
        check_keys(jo, "output", {"trace", "metrics", "model"});
        get_if(jo, "trace", s.output.trace);
        get_if(jo, "metrics", s.output.metrics);
        get_if(jo, "model", s.output.model);
    }
    s.sim.validate();
    return s;
}

ScenarioFile load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ConfigError("scenario parse error: " + std::string(e.what()));
    }
    return parse_scenario_json(doc);
}

json scenario_to_json(const ScenarioFile& s) {
    json doc;
    doc["preset"] = s.preset;
    doc["duration_s"] = s.sim.duration_s;
    doc["ts_s"] = s.sim.ts_s;
    doc["seed"] = s.sim.seed;
    doc["initial"] = {{"x_lead", s.sim.x0_lead},
                      {"x_ego", s.sim.x0_ego},
                      {"v_lead", s.sim.v0_lead},
                      {"v_ego", s.sim.v0_ego}};
    doc["acc"] = {{"v_set", s.sim.acc.v_set},
                  {"t_gap", s.sim.acc.t_gap},
                  {"d_default", s.sim.acc.d_default},
                  {"a_min", s.sim.acc.a_min},
                  {"a_max", s.sim.acc.a_max},
                  {"kp_speed", s.sim.acc.kp_speed},
                  {"kp_space", s.sim.acc.kp_space},
                  {"kd_rel", s.sim.acc.kd_rel},
                  {"mpc",
                   {{"horizon_p", s.sim.acc.mpc.horizon_p},
                    {"horizon_m", s.sim.acc.mpc.horizon_m},
                    {"w_track", s.sim.acc.mpc.w_track},
                    {"w_du", s.sim.acc.mpc.w_du},
                    {"w_u", s.sim.acc.mpc.w_u}}}};
    doc["attack"] = {{"scenario", scenario_to_string(s.sim.attack.scenario)},
                     {"t_attack", s.sim.attack.t_attack},
                     {"spike_amplitude", s.sim.attack.spike_amplitude},
                     {"spike_duration", s.sim.attack.spike_duration},
                     {"arm_margin", s.sim.attack.arm_margin},
                     {"bias_target", s.sim.attack.bias_target},
                     {"bias_ramp_time", s.sim.attack.bias_ramp_time}};
    doc["ids"] = {{"enabled", s.sim.ids.enabled},
                  {"k", s.sim.ids.k},
                  {"n_consec", s.sim.ids.n_consec},
                  {"sigma_floor", s.sim.ids.sigma_floor},
                  {"ref_tol_m", s.sim.ids.ref_tol_m},
                  {"calib_start_s", s.sim.ids.calib_start_s},
                  {"calib_end_s", s.sim.ids.calib_end_s},
                  {"n_u", s.sim.ids.regressor.n_u},
                  {"n_y", s.sim.ids.regressor.n_y},
                  {"hidden", s.sim.ids.training.hidden},
                  {"epochs", s.sim.ids.training.epochs},
                  {"lambda_init", s.sim.ids.training.lambda_init},
                  {"train_seed", s.sim.ids.training.seed},
                  {"rmse_cap", s.sim.ids.training.rmse_cap},
                  {"val_fraction", s.sim.ids.training.val_fraction}};
    doc["compensation"] = s.sim.compensation_enabled;
    json segs = json::array();
    for (const auto& seg : s.sim.lead_segments) {
        segs.push_back(json::array({seg.t_start, seg.accel}));
    }
    doc["lead_profile"] = segs;
    doc["noise"] = {{"vel_std", s.sim.noise.vel_std}, {"dist_std", s.sim.noise.dist_std}};
    doc["ego_driver"] = driver_to_string(s.sim.ego_driver);
    doc["behavior"] = {{"alpha", s.sim.behavior.alpha},
                       {"beta", s.sim.behavior.beta},
                       {"ovm_argument", s.sim.behavior.ovm_argument ==
                                                OvmArgument::RelativeVelocity
                                            ? "relative_velocity"
                                            : "spacing"},
                       {"fv",
                        {{"offset", s.sim.behavior.fv.offset},
                         {"slope", s.sim.behavior.fv.slope},
                         {"lo", s.sim.behavior.fv.lo},
                         {"hi", s.sim.behavior.fv.hi}}}};
    doc["output"] = {{"trace", s.output.trace},
                     {"metrics", s.output.metrics},
                     {"model", s.output.model}};
    return doc;
}

namespace {

using Setter = std::function<void(SimConfig&, double)>;

const std::map<std::string, Setter>& setter_map() {
    static const std::map<std::string, Setter> m = {
        {"duration_s", [](SimConfig& c, double v) { c.duration_s = v; }},
        {"seed", [](SimConfig& c, double v) { c.seed = static_cast<unsigned>(v); }},
        {"v_set", [](SimConfig& c, double v) { c.acc.v_set = v; }},
        {"t_gap", [](SimConfig& c, double v) { c.acc.t_gap = v; }},
        {"d_default", [](SimConfig& c, double v) { c.acc.d_default = v; }},
        {"a_min", [](SimConfig& c, double v) { c.acc.a_min = v; }},
        {"a_max", [](SimConfig& c, double v) { c.acc.a_max = v; }},
        {"kp_speed", [](SimConfig& c, double v) { c.acc.kp_speed = v; }},
        {"kp_space", [](SimConfig& c, double v) { c.acc.kp_space = v; }},
        {"kd_rel", [](SimConfig& c, double v) { c.acc.kd_rel = v; }},
        {"horizon_p", [](SimConfig& c, double v) { c.acc.mpc.horizon_p = static_cast<int>(v); }},
        {"horizon_m", [](SimConfig& c, double v) { c.acc.mpc.horizon_m = static_cast<int>(v); }},
        {"w_track", [](SimConfig& c, double v) { c.acc.mpc.w_track = v; }},
        {"w_du", [](SimConfig& c, double v) { c.acc.mpc.w_du = v; }},
        {"w_u", [](SimConfig& c, double v) { c.acc.mpc.w_u = v; }},
        {"t_attack", [](SimConfig& c, double v) { c.attack.t_attack = v; }},
        {"spike_amplitude", [](SimConfig& c, double v) { c.attack.spike_amplitude = v; }},
        {"spike_duration", [](SimConfig& c, double v) { c.attack.spike_duration = v; }},
        {"arm_margin", [](SimConfig& c, double v) { c.attack.arm_margin = v; }},
        {"bias_target", [](SimConfig& c, double v) { c.attack.bias_target = v; }},
        {"bias_ramp_time", [](SimConfig& c, double v) { c.attack.bias_ramp_time = v; }},
        {"k", [](SimConfig& c, double v) { c.ids.k = v; }},
        {"n_consec", [](SimConfig& c, double v) { c.ids.n_consec = static_cast<int>(v); }},
        {"sigma_floor", [](SimConfig& c, double v) { c.ids.sigma_floor = v; }},
        {"ref_tol_m", [](SimConfig& c, double v) { c.ids.ref_tol_m = v; }},
        {"vel_std", [](SimConfig& c, double v) { c.noise.vel_std = v; }},
        {"dist_std", [](SimConfig& c, double v) { c.noise.dist_std = v; }},
    };
    return m;
}

}  // namespace

void set_numeric_field(SimConfig& config, const std::string& name, double value) {
    const auto& m = setter_map();
    auto it = m.find(name);
    if (it == m.end()) throw ConfigError("unknown sweep parameter '" + name + "'");
    it->second(config, value);
}

const std::vector<std::string>& sweepable_fields() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const auto& [k, _] : setter_map()) v.push_back(k);
        return v;
    }();
    return names;
}

}  // namespace accsim
