#include "accsim/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "accsim/errors.hpp"

namespace accsim {
namespace {

const char* mode_name(Mode m) {
    return m == Mode::SpeedControl ? "speed" : "spacing";
}

const char* controller_name(ActiveController c) {
    return c == ActiveController::Mpc ? "mpc" : "comp";
}

void append_num(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    out += buf;
}

}  // namespace

void SimConfig::validate() const {
    try {
        if (!(duration_s > 0.0)) throw std::invalid_argument("duration_s must be > 0");
        if (!(ts_s > 0.0)) throw std::invalid_argument("ts_s must be > 0");
        if (!(x0_lead > x0_ego)) throw std::invalid_argument("lead must start ahead of ego");
        if (noise.vel_std < 0.0 || noise.dist_std < 0.0)
            throw std::invalid_argument("noise stds must be >= 0");
        acc.validate();
        attack.validate();
        if (!(ids.k > 0.0)) throw std::invalid_argument("ids.k must be > 0");
        if (ids.n_consec < 1) throw std::invalid_argument("ids.n_consec must be >= 1");
        if (!(ids.sigma_floor > 0.0)) throw std::invalid_argument("ids.sigma_floor must be > 0");
        if (ids.ref_tol_m < 0.0) throw std::invalid_argument("ids.ref_tol_m must be >= 0");
        if (!(ids.calib_start_s >= 0.0 && ids.calib_end_s > ids.calib_start_s))
            throw std::invalid_argument("ids calibration window is empty");
        if (ids.regressor.n_u < 1 || ids.regressor.n_y < 1)
            throw std::invalid_argument("ids regressor lags must be >= 1");
        if (ego_driver != EgoDriver::Acc &&
            (attack.scenario != AttackScenario::None || ids.enabled)) {
            throw std::invalid_argument(
                "behavioral ego drivers run without attacks or the IDS");
        }
        // Constructing the profile validates ordering and nonnegative velocity.
        (void)LeadProfile::checked(lead_segments, v0_lead, duration_s);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

RunResult run_scenario(const SimConfig& config, const IdsBundle* ids) {
    config.validate();
    const bool ids_on = config.ids.enabled;
    if (ids_on && ids == nullptr) {
        throw ConfigError("run_scenario: IDS enabled but no trained model supplied");
    }

    const DiscretePlant plant = discretize_plant(config.ts_s);
    const LeadProfile profile =
        LeadProfile::checked(config.lead_segments, config.v0_lead, config.duration_s);
    VehicleState lead{config.x0_lead, config.v0_lead, 0.0};
    VehicleState ego{config.x0_ego, config.v0_ego, 0.0};

    std::mt19937 rng(config.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const bool use_noise = config.noise.vel_std > 0.0 || config.noise.dist_std > 0.0;

    const long n_steps = std::lround(config.duration_s / config.ts_s);
    const double ts = config.ts_s;
    const double lag_pole = plant.a_d[2][2];
    const double lag_gain = plant.b_d[2];
    const double nan = std::numeric_limits<double>::quiet_NaN();

    RunResult result;
    result.trace.rows.reserve(n_steps);
    result.io_log.reserve(n_steps);

    double prev_u = 0.0;
    double lag_est = 0.0;  // controller-side actuator estimate from its own commands
    IdsState ids_state;
    ids_state.buffer = RegressorBuffer(config.ids.regressor);
    std::optional<double> spike_onset;
    bool collided = false;
    long exceed_count = 0;

    for (long i = 0; i < n_steps; ++i) {
        const double t = static_cast<double>(i) * ts;
        const double d_rel = lead.x - ego.x;
        const double d_safe_true =
            safe_distance(ego.v, config.acc.t_gap, config.acc.d_default);

        if (d_rel <= 0.0 ||
            (config.ego_driver != EgoDriver::Acc && std::abs(d_rel) <= kSpacingEps)) {
            collided = true;
            result.trace.rows.push_back({t, lead.x, lead.v, ego.x, ego.v, 0.0, 0.0,
                                         d_rel, d_safe_true, d_safe_true,
                                         Mode::SpacingControl,
                                         ids_state.alarm_latched
                                             ? ActiveController::Compensator
                                             : ActiveController::Mpc,
                                         nan, nan, ids_state.alarm_latched});
            break;
        }

        const double meas_v =
            ego.v + (use_noise ? config.noise.vel_std * gauss(rng) : 0.0);
        const double meas_d =
            d_rel + (use_noise ? config.noise.dist_std * gauss(rng) : 0.0);
        const double meas_vrel =
            (lead.v - ego.v) + (use_noise ? config.noise.vel_std * gauss(rng) : 0.0);
        const double d_safe_meas =
            safe_distance(meas_v, config.acc.t_gap, config.acc.d_default);

        double a_cmd = 0.0, a_applied = 0.0, d_safe_used = d_safe_true;
        Mode mode = Mode::SpeedControl;
        ActiveController act = ActiveController::Mpc;
        double y_nn = nan, residual = nan;

        if (config.ego_driver != EgoDriver::Acc) {
            mode = select_mode(d_rel, d_safe_true);
            double raw = 0.0;
            const auto& bp = config.behavior;
            switch (config.ego_driver) {
                case EgoDriver::FollowLeader:
                    raw = follow_leader_accel(bp.alpha, lead.v - ego.v, d_rel);
                    break;
                case EgoDriver::OptimalVelocity:
                    raw = combined_accel(0.0, bp.beta, bp.fv, lead.v, ego.v, d_rel,
                                         bp.ovm_argument);
                    break;
                default:
                    raw = combined_accel(bp.alpha, bp.beta, bp.fv, lead.v, ego.v, d_rel,
                                         bp.ovm_argument);
                    break;
            }
            a_cmd = std::clamp(raw, config.acc.a_min, config.acc.a_max);
            a_applied = a_cmd;
        } else {
            if (config.attack.scenario == AttackScenario::Spike && !spike_onset &&
                t >= config.attack.t_attack &&
                spike_trigger_armed(config.attack, meas_d, d_safe_meas)) {
                spike_onset = t;
            }
            const bool use_comp = config.compensation_enabled && ids_state.alarm_latched;
            d_safe_used =
                use_comp ? d_safe_meas : tamper_reference(config.attack, t, d_safe_meas);
            const Measurements meas{meas_v, meas_d, meas_vrel, lag_est};
            const ControlDecision dec =
                control_step(config.acc, plant, meas, use_comp, prev_u, d_safe_used);
            a_cmd = dec.accel_cmd;
            mode = dec.mode;
            act = dec.active_controller;

            if (ids_on) {
                if (ids_state.buffer.ready()) {
                    y_nn = ids->model.predict(ids_state.buffer.assemble());
                    residual = meas_v - y_nn;
                    if (exceeds_threshold(ids->thresholds, mode, residual)) ++exceed_count;
                    ids_state = detect(std::move(ids_state), ids->thresholds, mode,
                                       meas_v, y_nn, t);
                    if (!ids_state.alarm_latched &&
                        std::abs(d_safe_used - d_safe_meas) > config.ids.ref_tol_m) {
                        ids_state.latch(t);
                    }
                }
                ids_state.buffer.push(a_cmd, meas_v);
            }

            a_applied = a_cmd;
            if (config.attack.scenario == AttackScenario::Spike && spike_onset) {
                AttackSpec effective = config.attack;
                effective.t_attack = *spike_onset;
                a_applied = tamper_actuation(effective, t, a_cmd, config.acc.a_min,
                                             config.acc.a_max);
            }
        }

        result.trace.rows.push_back({t, lead.x, lead.v, ego.x, ego.v, a_cmd, a_applied,
                                     d_rel, d_safe_true, d_safe_used, mode, act, y_nn,
                                     residual, ids_state.alarm_latched});
        result.io_log.push_back({a_cmd, meas_v, mode});

        lead = advance_lead(lead, profile, t, plant);
        ego = step_vehicle(ego, plant, a_applied);
        lag_est = lag_pole * lag_est + lag_gain * a_cmd;
        prev_u = a_cmd;
    }

    result.metrics = compute_metrics(result.trace, config.attack);
    result.metrics.collision = result.metrics.collision || collided;
    result.metrics.exceed_count = exceed_count;
    return result;
}

Metrics compute_metrics(const SimTrace& trace, const AttackSpec& attack) {
    if (trace.rows.empty()) throw std::invalid_argument("compute_metrics: empty trace");
    const auto& rows = trace.rows;
    const double ts = rows.size() >= 2 ? rows[1].t - rows[0].t : 0.0;

    Metrics m;
    m.min_d_rel = std::numeric_limits<double>::infinity();
    long violations = 0;
    for (const auto& r : rows) {
        m.min_d_rel = std::min(m.min_d_rel, r.d_rel);
        if (r.d_rel < r.d_safe_true) ++violations;
        if (r.d_rel <= 0.0) m.collision = true;
    }
    m.violation_duration = ts * static_cast<double>(violations);

    const double t_end = rows.back().t;
    double deficit_sum = 0.0;
    long deficit_n = 0;
    for (const auto& r : rows) {
        if (r.t >= t_end - 10.0 - 1e-9) {
            deficit_sum += r.d_safe_true - r.d_rel;
            ++deficit_n;
        }
    }
    m.steady_gap_deficit = deficit_n > 0 ? deficit_sum / deficit_n : 0.0;

    std::optional<double> first_alarm;
    for (const auto& r : rows) {
        if (r.alarm) {
            first_alarm = r.t;
            break;
        }
    }
    std::optional<double> onset;
    if (attack.scenario == AttackScenario::Spike) {
        for (const auto& r : rows) {
            if (r.a_applied != r.a_cmd) {
                onset = r.t;
                break;
            }
        }
    } else if (attack.scenario == AttackScenario::ReferenceBias) {
        onset = attack.t_attack;
    }
    if (first_alarm && onset) m.detection_latency = *first_alarm - *onset;
    return m;
}

IdsBundle train_on_nominal(const SimConfig& config) {
    SimConfig nominal = config;
    nominal.attack.scenario = AttackScenario::None;
    nominal.ids.enabled = false;

    if (config.duration_s < config.ids.calib_end_s) {
        throw TrainingError("training run shorter than the calibration window");
    }
    const RunResult rr = run_scenario(nominal, nullptr);

    std::vector<IoSample> io;
    io.reserve(rr.io_log.size());
    for (const auto& s : rr.io_log) io.push_back({s.u, s.y});

    IdsBundle bundle;
    bundle.model = train_identifier(io, config.ids.regressor, config.ids.training);

    const auto begin_idx =
        static_cast<std::size_t>(std::ceil(config.ids.calib_start_s / config.ts_s));
    const auto end_idx =
        static_cast<std::size_t>(std::floor(config.ids.calib_end_s / config.ts_s));
    if (end_idx > rr.io_log.size() || begin_idx >= end_idx) {
        throw TrainingError("calibration window lies outside the training run");
    }
    const std::span<const LabeledSample> window(rr.io_log.data() + begin_idx,
                                                end_idx - begin_idx);
    bundle.thresholds = calibrate_threshold(bundle.model, window, config.ids.k,
                                            config.ids.sigma_floor);
    bundle.thresholds.n_consec = config.ids.n_consec;
    return bundle;
}

std::string trace_to_csv(const SimTrace& trace) {
    std::string out =
        "t,x_lead,v_lead,x_ego,v_ego,a_cmd,a_applied,d_rel,d_safe_true,d_safe_used,"
        "mode,active_controller,y_nn,residual,alarm\n";
    for (const auto& r : trace.rows) {
        append_num(out, r.t);
        for (double v : {r.x_lead, r.v_lead, r.x_ego, r.v_ego, r.a_cmd, r.a_applied,
                         r.d_rel, r.d_safe_true, r.d_safe_used}) {
            out += ',';
            append_num(out, v);
        }
        out += ',';
        out += mode_name(r.mode);
        out += ',';
        out += controller_name(r.active_controller);
        out += ',';
        append_num(out, r.y_nn);
        out += ',';
        append_num(out, r.residual);
        out += ',';
        out += r.alarm ? '1' : '0';
        out += '\n';
    }
    return out;
}

std::string metrics_to_json(const Metrics& metrics) {
    nlohmann::json j;
    if (metrics.detection_latency) {
        j["detection_latency"] = *metrics.detection_latency;
    } else {
        j["detection_latency"] = nullptr;
    }
    j["min_d_rel"] = metrics.min_d_rel;
    j["violation_duration"] = metrics.violation_duration;
    j["steady_gap_deficit"] = metrics.steady_gap_deficit;
    j["collision"] = metrics.collision;
    j["exceed_count"] = metrics.exceed_count;
    return j.dump(2) + "\n";
}

}  // namespace accsim
