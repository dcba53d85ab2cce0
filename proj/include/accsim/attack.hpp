#pragma once

namespace accsim {

enum class AttackScenario { None, Spike, ReferenceBias };

// Which covert attack runs, when it starts and how it is shaped. The spike
// fires once; the harness owns the one-shot latch and rebases t_attack to the
// first armed sample.
struct AttackSpec {
    AttackScenario scenario = AttackScenario::None;
    double t_attack = 40.0;        // s
    double spike_amplitude = 2.0;  // m/s^2 added onto the actuation channel
    double spike_duration = 1.0;   // s
    double arm_margin = 0.1;       // spike arms when d_rel <= d_safe*(1+arm_margin)
    double bias_target = 5.0;      // m of reference erosion at full ramp
    double bias_ramp_time = 60.0;  // s to reach bias_target

    void validate() const;  // throws std::invalid_argument
};

// Actuation-channel tampering (Scenario Spike). The attacker bypasses the
// controller's software clamp but not vehicle physics, so the result is
// clamped to [phys_min, phys_max] after the addition.
double tamper_actuation(const AttackSpec& spec, double t, double u,
                        double phys_min, double phys_max);

// Reference-channel tampering (Scenario ReferenceBias): lowers d_safe by a
// linear ramp delta(t) = bias_target * min(1, (t - t_attack)/bias_ramp_time),
// floored at zero.
double tamper_reference(const AttackSpec& spec, double t, double d_safe);

// True when the spike's distance gate is satisfied: d_rel <= d_safe*(1+margin).
bool spike_trigger_armed(const AttackSpec& spec, double d_rel, double d_safe);

}  // namespace accsim
