#include "accsim/attack.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace accsim {

void AttackSpec::validate() const {
    if (t_attack < 0.0) throw std::invalid_argument("attack: t_attack must be >= 0");
    if (scenario == AttackScenario::Spike && !(spike_duration > 0.0)) {
        throw std::invalid_argument("attack: spike_duration must be > 0");
    }
    if (scenario == AttackScenario::ReferenceBias) {
        if (bias_target < 0.0) throw std::invalid_argument("attack: bias_target must be >= 0");
        if (!(bias_ramp_time > 0.0)) throw std::invalid_argument("attack: bias_ramp_time must be > 0");
    }
    if (arm_margin < 0.0) throw std::invalid_argument("attack: arm_margin must be >= 0");
}

double tamper_actuation(const AttackSpec& spec, double t, double u,
                        double phys_min, double phys_max) {
    if (spec.scenario != AttackScenario::Spike) return u;
    if (t < spec.t_attack || t >= spec.t_attack + spec.spike_duration) return u;
    return std::clamp(u + spec.spike_amplitude, phys_min, phys_max);
}

double tamper_reference(const AttackSpec& spec, double t, double d_safe) {
    if (!(d_safe > 0.0)) throw std::invalid_argument("tamper_reference: d_safe must be > 0");
    if (spec.scenario != AttackScenario::ReferenceBias || t < spec.t_attack) return d_safe;
    const double delta =
        spec.bias_target * std::min(1.0, (t - spec.t_attack) / spec.bias_ramp_time);
    return std::max(0.0, d_safe - delta);
}

bool spike_trigger_armed(const AttackSpec& spec, double d_rel, double d_safe) {
    return d_rel <= d_safe * (1.0 + spec.arm_margin);
}

}  // namespace accsim
