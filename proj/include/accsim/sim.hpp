#pragma once

#include <optional>
#include <string>
#include <vector>

#include "accsim/attack.hpp"
#include "accsim/controller.hpp"
#include "accsim/dynamics.hpp"
#include "accsim/ids.hpp"

namespace accsim {

// Which model produces the ego acceleration command. Acc is the closed loop
// (MPC + compensator); the rest are open-loop car-following behaviors driven
// through the same lag plant, usable as alternative ego plants.
enum class EgoDriver { Acc, FollowLeader, OptimalVelocity, Combined };

struct BehaviorParams {
    double alpha = 1.0;  // follow-the-leader gain (1/s)
    double beta = 0.5;   // optimal-velocity gain (1/s)
    VelocityFunction fv;
    OvmArgument ovm_argument = OvmArgument::RelativeVelocity;
};

struct IdsConfig {
    bool enabled = true;
    double k = 4.0;
    int n_consec = 2;
    double sigma_floor = 1e-4;  // m/s
    // Reference-consistency channel: alarm when the reference handed to the
    // controller drifts from the safe-distance law recomputed off the
    // measured velocity.
    double ref_tol_m = 0.05;
    double calib_start_s = 5.0;
    double calib_end_s = 35.0;
    RegressorSpec regressor;
    TrainingParams training;
};

struct NoiseConfig {
    double vel_std = 0.0;   // m/s, applied to v_ego and v_rel measurements
    double dist_std = 0.0;  // m, applied to d_rel measurement
};

struct SimConfig {
    double duration_s = 80.0;
    double ts_s = 0.1;
    unsigned seed = 1;
    double x0_lead = 50.0;
    double x0_ego = 10.0;
    double v0_lead = 25.0;
    double v0_ego = 20.0;
    AccConfig acc;
    AttackSpec attack;
    IdsConfig ids;
    bool compensation_enabled = true;
    std::vector<LeadProfile::Segment> lead_segments{
        {0.0, 0.0}, {15.0, -1.0}, {20.0, 0.0}, {50.0, 1.0}, {55.0, 0.0}};
    NoiseConfig noise;
    EgoDriver ego_driver = EgoDriver::Acc;
    BehaviorParams behavior;

    void validate() const;  // throws ConfigError
};

struct TraceRow {
    double t = 0.0;
    double x_lead = 0.0, v_lead = 0.0;
    double x_ego = 0.0, v_ego = 0.0;
    double a_cmd = 0.0;      // controller output
    double a_applied = 0.0;  // after actuation tampering
    double d_rel = 0.0;
    double d_safe_true = 0.0;  // safe-distance law at the true ego velocity
    double d_safe_used = 0.0;  // reference the active controller consulted
    Mode mode = Mode::SpeedControl;
    ActiveController active_controller = ActiveController::Mpc;
    double y_nn = 0.0;      // NaN while the IDS is warming up or disabled
    double residual = 0.0;  // NaN likewise
    bool alarm = false;
};

struct SimTrace {
    std::vector<TraceRow> rows;
};

struct Metrics {
    std::optional<double> detection_latency;  // s
    double min_d_rel = 0.0;                   // m
    double violation_duration = 0.0;          // s with d_rel < d_safe_true
    double steady_gap_deficit = 0.0;          // mean d_safe_true - d_rel, final 10 s
    bool collision = false;
    long exceed_count = 0;  // per-sample threshold exceedances (non-latching)
};

struct IdsBundle {
    IdentifierModel model;
    ThresholdSet thresholds;
};

struct RunResult {
    SimTrace trace;
    Metrics metrics;
    // Per-step controller command / measured velocity / mode, as the IDS saw
    // them; feeds identifier training and threshold calibration.
    std::vector<LabeledSample> io_log;
};

// Closed-loop run. ids may be null when config.ids.enabled is false; a null
// bundle with the IDS enabled is a ConfigError. Deterministic per config.
RunResult run_scenario(const SimConfig& config, const IdsBundle* ids = nullptr);

// Summary numbers from a trace. Attack onset for the latency is the first
// actuation discrepancy (Spike) or t_attack (ReferenceBias).
Metrics compute_metrics(const SimTrace& trace, const AttackSpec& attack);

// Runs the attack-free variant of config, trains the identifier on the whole
// run and calibrates per-mode thresholds on [calib_start_s, calib_end_s).
IdsBundle train_on_nominal(const SimConfig& config);

// CSV with a header row; floats at 9 significant digits.
std::string trace_to_csv(const SimTrace& trace);

std::string metrics_to_json(const Metrics& metrics);

}  // namespace accsim
