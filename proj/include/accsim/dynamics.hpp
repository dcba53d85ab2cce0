#pragma once

#include <array>
#include <vector>

namespace accsim {

// Longitudinal state of one vehicle. a_lag is the internal first-order
// actuator state (the actual acceleration produced by the throttle body);
// with a_lag = 0 and zero command the vehicle coasts at constant velocity.
struct VehicleState {
    double x = 0.0;      // position (m)
    double v = 0.0;      // velocity (m/s)
    double a_lag = 0.0;  // actual acceleration behind the actuator lag (m/s^2)
};

// Exact zero-order-hold discretization of the acceleration-command ->
// velocity dynamics 1/(s(0.5s+1)), position chained after the velocity
// integrator. State order: (x, v, a_lag).
struct DiscretePlant {
    std::array<std::array<double, 3>, 3> a_d{};  // state transition
    std::array<double, 3> b_d{};                 // input column
    std::array<double, 3> c_d{0.0, 1.0, 0.0};    // velocity output row
    double ts = 0.0;                             // sample time (s)
};

// Throws std::invalid_argument for ts <= 0 or non-finite ts.
DiscretePlant discretize_plant(double ts);

// One ZOH step under a constant acceleration command. Throws
// std::invalid_argument on non-finite state or command.
VehicleState step_vehicle(const VehicleState& state, const DiscretePlant& plant,
                          double accel_cmd);

// Saturating-linear optimal-velocity map r -> clamp(offset + slope*r, lo, hi).
struct VelocityFunction {
    double offset = 25.0;
    double slope = 1.0;
    double lo = 0.0;
    double hi = 35.0;
    double operator()(double r) const;
};

// Follow-the-leader model is singular at zero spacing; spacing magnitudes at
// or below this are reported as a singularity (physically: a collision).
inline constexpr double kSpacingEps = 0.1;  // m

// accel = alpha * v_rel / d_rel. Throws std::domain_error if |d_rel| <= kSpacingEps.
double follow_leader_accel(double alpha, double v_rel, double d_rel);

// accel = beta * (fv(v_lead - v_ego) - v_ego)
double optimal_velocity_accel(double beta, const VelocityFunction& fv,
                              double v_lead, double v_ego);

// Which argument the optimal-velocity map receives in the combined model.
enum class OvmArgument { RelativeVelocity, Spacing };

// Sum of the follow-the-leader and optimal-velocity accelerations.
double combined_accel(double alpha, double beta, const VelocityFunction& fv,
                      double v_lead, double v_ego, double d_rel,
                      OvmArgument ovm_arg = OvmArgument::RelativeVelocity);

// Piecewise-constant acceleration schedule for the lead vehicle's driver.
class LeadProfile {
public:
    struct Segment {
        double t_start = 0.0;  // s
        double accel = 0.0;    // m/s^2
    };

    // Validates ordering (strictly increasing t_start, first at t=0) and that
    // the piecewise-integrated velocity never goes negative on [0, horizon_s]
    // starting from v0. Throws std::invalid_argument otherwise.
    static LeadProfile checked(std::vector<Segment> segments, double v0,
                               double horizon_s);

    // Acceleration commanded at time t; the last segment persists past its end.
    double accel_at(double t) const;

    // Piecewise-integrated velocity (ignores the actuator lag); used for
    // validation and as a test oracle.
    double velocity_at(double t, double v0) const;

    const std::vector<Segment>& segments() const { return segments_; }

private:
    std::vector<Segment> segments_;
};

// Integrate the lead one step through the shared plant under its profile.
VehicleState advance_lead(const VehicleState& state, const LeadProfile& profile,
                          double t, const DiscretePlant& plant);

}  // namespace accsim
