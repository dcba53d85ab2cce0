#pragma once

#include <optional>

#include "accsim/dynamics.hpp"

namespace accsim {

enum class Mode { SpeedControl, SpacingControl };
enum class ActiveController { Mpc, Compensator };

struct MpcParams {
    int horizon_p = 30;   // prediction horizon (steps)
    int horizon_m = 2;    // control horizon (moves); held constant afterwards
    double w_track = 1.0; // output tracking-error weight
    double w_du = 0.1;    // input-move weight, first move anchored at prev_u
    double w_u = 0.0;     // input weight (per move)
};

struct AccConfig {
    double v_set = 30.0;      // driver-set speed (m/s)
    double t_gap = 1.4;       // headway time gap (s)
    double d_default = 10.0;  // standstill spacing (m)
    double a_min = -3.0;      // m/s^2
    double a_max = 2.0;       // m/s^2
    MpcParams mpc;
    // Fallback compensator gains. Pure P on distance through the double
    // integrator is marginally damped, so spacing mode carries a D term on
    // the measured relative velocity; set kd_rel = 0 for the pure-P variant.
    double kp_speed = 0.5;  // 1/s
    double kp_space = 0.2;  // 1/s^2 equivalent
    double kd_rel = 0.6;    // 1/s

    // Throws std::invalid_argument when an invariant is broken.
    void validate() const;
};

// Sensor picture handed to the controller each step. lag_accel is the
// controller's own estimate of the actuator state, propagated from its
// command history (the plant's internal state is not measurable).
struct Measurements {
    double v_ego = 0.0;     // m/s
    double d_rel = 0.0;     // m
    double v_rel = 0.0;     // m/s, lead minus ego
    double lag_accel = 0.0; // m/s^2
};

struct ControlDecision {
    double accel_cmd = 0.0;  // clamped to [a_min, a_max]
    Mode mode = Mode::SpeedControl;
    ActiveController active_controller = ActiveController::Mpc;
    double reference_used = 0.0;  // m/s in speed mode, m in spacing mode
};

// D_safe = D_default + T_gap * v_ego. Negative v_ego is allowed and simply
// yields a value below D_default.
double safe_distance(double v_ego, double t_gap, double d_default);

// SpeedControl iff d_rel >= d_safe (ties go to speed control).
Mode select_mode(double d_rel, double d_safe);

// Full move vector (horizon_m entries) of the box-constrained quadratic
// tracking problem over the discretized plant. Tracked output is the ego
// velocity (speed mode, reference v_set) or the relative distance (spacing
// mode, reference D_safe; lead velocity reconstructed as v_ego + v_rel and
// held constant across the horizon). spacing_ref overrides the safe-distance
// reference when the loop hands the controller a (possibly tampered) value.
// Throws ControllerFault if the QP iteration cap is exhausted.
std::vector<double> mpc_moves(const AccConfig& cfg, const DiscretePlant& plant,
                              Mode mode, const Measurements& meas, double prev_u,
                              std::optional<double> spacing_ref = std::nullopt);

// First move of mpc_moves, applied receding-horizon style.
double mpc_step(const AccConfig& cfg, const DiscretePlant& plant, Mode mode,
                const Measurements& meas, double prev_u,
                std::optional<double> spacing_ref = std::nullopt);

// Fallback compensator. Speed mode: kp_speed*(v_set - v_ego). Spacing mode:
// kp_space*(d_rel - d_safe) + kd_rel*v_rel, with d_safe recomputed from the
// measured velocity -- the compensator never trusts an external reference.
double p_step(const AccConfig& cfg, Mode mode, const Measurements& meas);

// Full per-step decision: compute D_safe, pick the mode, dispatch to the MPC
// (alarm_latched == false) or the compensator (true). d_safe_override feeds
// the MPC path only; the compensator always recomputes its own reference.
ControlDecision control_step(const AccConfig& cfg, const DiscretePlant& plant,
                             const Measurements& meas, bool alarm_latched,
                             double prev_u,
                             std::optional<double> d_safe_override = std::nullopt);

}  // namespace accsim
