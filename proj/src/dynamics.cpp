#include "accsim/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace accsim {

DiscretePlant discretize_plant(double ts) {
    if (!std::isfinite(ts) || ts <= 0.0) {
        throw std::invalid_argument("discretize_plant: sample time must be > 0, got " +
                                    std::to_string(ts));
    }
    // Continuous model, state z = (x, v, a):
    //   x' = v, v' = a, a' = -2a + 2u
    // so v(s)/u(s) = 2/(s(s+2)) = 1/(s(0.5s+1)).
    // exp(A t) and the ZOH input integral have closed forms:
    const double e = std::exp(-2.0 * ts);
    const double g1 = 0.5 * (1.0 - e);                 // coupling a -> v over ts
    const double g2 = 0.5 * ts - 0.25 * (1.0 - e);     // coupling a -> x over ts

    DiscretePlant p;
    p.ts = ts;
    p.a_d = {{{1.0, ts, g2},
              {0.0, 1.0, g1},
              {0.0, 0.0, e}}};
    p.b_d = {0.5 * ts * ts - 0.5 * ts + 0.25 * (1.0 - e),  // x
             ts - 0.5 * (1.0 - e),                         // v
             1.0 - e};                                     // a_lag
    return p;
}

VehicleState step_vehicle(const VehicleState& state, const DiscretePlant& plant,
                          double accel_cmd) {
    if (!std::isfinite(state.x) || !std::isfinite(state.v) ||
        !std::isfinite(state.a_lag) || !std::isfinite(accel_cmd)) {
        throw std::invalid_argument("step_vehicle: non-finite state or command");
    }
    const auto& a = plant.a_d;
    const auto& b = plant.b_d;
    VehicleState next;
    next.x = a[0][0] * state.x + a[0][1] * state.v + a[0][2] * state.a_lag + b[0] * accel_cmd;
    next.v = a[1][0] * state.x + a[1][1] * state.v + a[1][2] * state.a_lag + b[1] * accel_cmd;
    next.a_lag = a[2][0] * state.x + a[2][1] * state.v + a[2][2] * state.a_lag + b[2] * accel_cmd;
    return next;
}

double VelocityFunction::operator()(double r) const {
    return std::clamp(offset + slope * r, lo, hi);
}

double follow_leader_accel(double alpha, double v_rel, double d_rel) {
    if (std::abs(d_rel) <= kSpacingEps) {
        throw std::domain_error("follow_leader_accel: spacing " + std::to_string(d_rel) +
                                " m is inside the singularity guard");
    }
    return alpha * v_rel / d_rel;
}

double optimal_velocity_accel(double beta, const VelocityFunction& fv,
                              double v_lead, double v_ego) {
    return beta * (fv(v_lead - v_ego) - v_ego);
}

double combined_accel(double alpha, double beta, const VelocityFunction& fv,
                      double v_lead, double v_ego, double d_rel, OvmArgument ovm_arg) {
    const double ftl = (alpha == 0.0) ? 0.0 : follow_leader_accel(alpha, v_lead - v_ego, d_rel);
    double ovm = 0.0;
    if (beta != 0.0) {
        const double arg = (ovm_arg == OvmArgument::RelativeVelocity) ? v_lead - v_ego : d_rel;
        ovm = beta * (fv(arg) - v_ego);
    }
    return ftl + ovm;
}

LeadProfile LeadProfile::checked(std::vector<Segment> segments, double v0,
                                 double horizon_s) {
    if (segments.empty()) {
        throw std::invalid_argument("lead profile: at least one segment required");
    }
    if (segments.front().t_start != 0.0) {
        throw std::invalid_argument("lead profile: first segment must start at t=0");
    }
    for (std::size_t i = 1; i < segments.size(); ++i) {
        if (segments[i].t_start <= segments[i - 1].t_start) {
            throw std::invalid_argument("lead profile: segment start times must be strictly increasing");
        }
    }
    LeadProfile p;
    p.segments_ = std::move(segments);

    // Velocity minima occur at segment boundaries or at the horizon.
    for (const auto& seg : p.segments_) {
        if (seg.t_start <= horizon_s && p.velocity_at(seg.t_start, v0) < 0.0) {
            throw std::invalid_argument("lead profile: integrated velocity goes negative");
        }
    }
    if (p.velocity_at(horizon_s, v0) < 0.0) {
        throw std::invalid_argument("lead profile: integrated velocity goes negative");
    }
    return p;
}

double LeadProfile::accel_at(double t) const {
    double a = segments_.front().accel;
    for (const auto& seg : segments_) {
        if (seg.t_start <= t) {
            a = seg.accel;
        } else {
            break;
        }
    }
    return a;
}

double LeadProfile::velocity_at(double t, double v0) const {
    double v = v0;
    for (std::size_t i = 0; i < segments_.size(); ++i) {
        const double seg_start = segments_[i].t_start;
        if (seg_start >= t) break;
        const double seg_end = (i + 1 < segments_.size())
                                   ? std::min(segments_[i + 1].t_start, t)
                                   : t;
        v += segments_[i].accel * (seg_end - seg_start);
    }
    return v;
}

VehicleState advance_lead(const VehicleState& state, const LeadProfile& profile,
                          double t, const DiscretePlant& plant) {
    return step_vehicle(state, plant, profile.accel_at(t));
}

}  // namespace accsim
