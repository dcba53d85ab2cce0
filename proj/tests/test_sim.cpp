#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include <doctest.h>

#include "accsim/config.hpp"
#include "accsim/errors.hpp"
#include "accsim/sim.hpp"

using namespace accsim;

namespace {

const SimConfig& preset_sim(const std::string& name) {
    static std::map<std::string, SimConfig> cache;
    auto it = cache.find(name);
    if (it == cache.end()) it = cache.emplace(name, preset_scenario(name).sim).first;
    return it->second;
}

// Training is the slow part; share one bundle per scenario family.
const IdsBundle& bundle_for(const std::string& preset) {
    static std::map<std::string, IdsBundle> cache;
    auto it = cache.find(preset);
    if (it == cache.end()) it = cache.emplace(preset, train_on_nominal(preset_sim(preset))).first;
    return it->second;
}

const RunResult& run_preset(const std::string& preset) {
    static std::map<std::string, RunResult> cache;
    auto it = cache.find(preset);
    if (it == cache.end()) {
        it = cache.emplace(preset, run_scenario(preset_sim(preset), &bundle_for(preset))).first;
    }
    return it->second;
}

}  // namespace

TEST_CASE("nominal run: quiet IDS, sane physics, spacing tracking") {
    const RunResult& rr = run_preset("nominal");
    const auto& rows = rr.trace.rows;
    REQUIRE(rows.size() == 800);

    for (const auto& r : rows) {
        CHECK_FALSE(r.alarm);
        CHECK(r.v_ego >= 0.0);
        CHECK(r.v_ego <= 40.0);
        CHECK(r.d_rel == r.x_lead - r.x_ego);  // exact by construction
        CHECK(r.a_cmd >= -3.0);
        CHECK(r.a_cmd <= 2.0);
        CHECK(r.a_applied == r.a_cmd);  // no attack
        CHECK(r.d_safe_used == r.d_safe_true);
    }
    CHECK(rr.metrics.exceed_count == 0);
    CHECK_FALSE(rr.metrics.collision);
    CHECK(!rr.metrics.detection_latency.has_value());

    // steady state over the last 10 s: spacing-mode tracking of d_safe
    double err_sum = 0.0;
    int n = 0, spacing_n = 0;
    for (const auto& r : rows) {
        if (r.t < 70.0) continue;
        err_sum += r.d_rel - r.d_safe_true;
        spacing_n += r.mode == Mode::SpacingControl ? 1 : 0;
        ++n;
    }
    CHECK(spacing_n > n / 2);
    CHECK(std::abs(err_sum / n) < 1.0);
}

TEST_CASE("nominal keeps the gap at the safe distance within tracking tolerance") {
    const RunResult& rr = run_preset("nominal");
    // The spacing equilibrium rides the d_rel = d_safe boundary; away from the
    // lead's maneuver transients the deficit must stay within tracking noise,
    // and the settled tail must be within centimeters.
    for (const auto& r : rr.trace.rows) {
        if (r.t >= 25.0) CHECK(r.d_rel >= r.d_safe_true - 1.0);
        if (r.t >= 70.0) CHECK(r.d_rel >= r.d_safe_true - 0.05);
    }
}

TEST_CASE("every preset keeps the ego inside the physical envelope") {
    for (const std::string name :
         {"nominal", "attack1_nocomp", "attack1_comp", "attack2_nocomp", "attack2_comp"}) {
        const RunResult& rr = run_preset(name);
        const double ts = preset_sim(name).ts_s;
        const double bound = 0.5 * 3.0 * ts * ts + 1e-9;
        const auto& rows = rr.trace.rows;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            CHECK(rows[i].v_ego >= 0.0);
            CHECK(rows[i].v_ego <= 40.0);
            CHECK(rows[i].t == static_cast<double>(i) * ts);
            if (i + 1 < rows.size()) {
                CHECK(std::abs(rows[i + 1].x_ego - rows[i].x_ego - rows[i].v_ego * ts) <=
                      bound);
            }
        }
        CHECK_FALSE(rr.metrics.collision);
    }
}

TEST_CASE("timestamps form the exact arithmetic grid") {
    const RunResult& rr = run_preset("nominal");
    const double ts = preset_sim("nominal").ts_s;
    for (std::size_t i = 0; i < rr.trace.rows.size(); ++i) {
        CHECK(rr.trace.rows[i].t == static_cast<double>(i) * ts);
    }
}

TEST_CASE("kinematic consistency per vehicle per step") {
    const RunResult& rr = run_preset("nominal");
    const auto& rows = rr.trace.rows;
    const double ts = 0.1;
    const double bound = 0.5 * 3.0 * ts * ts + 1e-9;  // |a| <= 3 everywhere
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
        CHECK(std::abs(rows[i + 1].x_ego - rows[i].x_ego - rows[i].v_ego * ts) <= bound);
        CHECK(std::abs(rows[i + 1].x_lead - rows[i].x_lead - rows[i].v_lead * ts) <= bound);
    }
}

TEST_CASE("same config and seed give byte-identical traces") {
    const SimConfig& cfg = preset_sim("nominal");
    const IdsBundle& bundle = bundle_for("nominal");
    const RunResult a = run_scenario(cfg, &bundle);
    const RunResult b = run_scenario(cfg, &bundle);
    CHECK(trace_to_csv(a.trace) == trace_to_csv(b.trace));
}

TEST_CASE("IDS on/off leaves the plant and controller columns untouched") {
    SimConfig cfg = preset_sim("nominal");
    const RunResult with_ids = run_scenario(cfg, &bundle_for("nominal"));
    cfg.ids.enabled = false;
    const RunResult without = run_scenario(cfg, nullptr);

    REQUIRE(with_ids.trace.rows.size() == without.trace.rows.size());
    for (std::size_t i = 0; i < with_ids.trace.rows.size(); ++i) {
        const auto& a = with_ids.trace.rows[i];
        const auto& b = without.trace.rows[i];
        CHECK(a.x_ego == b.x_ego);
        CHECK(a.v_ego == b.v_ego);
        CHECK(a.x_lead == b.x_lead);
        CHECK(a.a_cmd == b.a_cmd);
        CHECK(a.a_applied == b.a_applied);
        CHECK(a.mode == b.mode);
        CHECK(a.d_safe_used == b.d_safe_used);
        CHECK(std::isnan(b.y_nn));
        CHECK(std::isnan(b.residual));
    }
}

TEST_CASE("scenario 1 without compensation: genuine safe-distance violation") {
    const RunResult& rr = run_preset("attack1_nocomp");
    const Metrics& m = rr.metrics;
    CHECK(m.violation_duration > 0.0);
    CHECK_FALSE(m.collision);

    bool violated = false;
    for (const auto& r : rr.trace.rows) {
        if (r.t >= 40.0 && r.d_rel < r.d_safe_true) violated = true;
        CHECK(r.active_controller == ActiveController::Mpc);  // switch disabled
    }
    CHECK(violated);

    // the IDS still observes and reports even with the switch off
    REQUIRE(m.detection_latency.has_value());
    CHECK(*m.detection_latency <= 0.5);
}

TEST_CASE("scenario 1 with compensation: fast detection, clean recovery") {
    const RunResult& rr = run_preset("attack1_comp");
    const Metrics& m = rr.metrics;
    REQUIRE(m.detection_latency.has_value());
    // residual crosses the band at the first post-spike sample; the two-sample
    // consecutive rule puts the latch exactly two samples after onset
    CHECK(*m.detection_latency == doctest::Approx(0.2));

    bool comp_active_after_alarm = false;
    for (const auto& r : rr.trace.rows) {
        if (r.t >= 45.0) CHECK(r.d_rel >= r.d_safe_true);
        if (r.alarm && r.t > 40.5) {
            comp_active_after_alarm |= r.active_controller == ActiveController::Compensator;
        }
    }
    CHECK(comp_active_after_alarm);
}

TEST_CASE("spike fires at the first armed sample at or after t_attack") {
    const RunResult& rr = run_preset("attack1_nocomp");
    const auto& rows = rr.trace.rows;
    std::size_t onset = rows.size();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].a_applied != rows[i].a_cmd) {
            onset = i;
            break;
        }
    }
    REQUIRE(onset < rows.size());
    CHECK(rows[onset].t >= 40.0);
    CHECK(rows[onset].t <= 41.0);  // armed almost immediately while boundary riding
    // armed means the gate held at the firing instant
    CHECK(rows[onset].d_rel <= rows[onset].d_safe_true * 1.1 + 1e-6);
}

TEST_CASE("scenario 2 without compensation erodes the gap by the bias target") {
    const RunResult& rr = run_preset("attack2_nocomp");
    CHECK(rr.metrics.steady_gap_deficit > 4.0);
    CHECK(rr.metrics.steady_gap_deficit < 6.0);
    CHECK_FALSE(rr.metrics.collision);
    // reference erosion visible in the trace
    bool reference_tampered = false;
    for (const auto& r : rr.trace.rows) {
        if (r.t > 50.0 && r.d_safe_used < r.d_safe_true - 0.5) reference_tampered = true;
    }
    CHECK(reference_tampered);
}

TEST_CASE("scenario 2 with compensation restores the true reference") {
    const RunResult& rr = run_preset("attack2_comp");
    const Metrics& m = rr.metrics;
    REQUIRE(m.detection_latency.has_value());
    CHECK(*m.detection_latency <= 5.0);
    CHECK(std::abs(m.steady_gap_deficit) < 0.5);

    // ablation ordering vs the uncompensated run
    CHECK(run_preset("attack2_nocomp").metrics.steady_gap_deficit > m.steady_gap_deficit);
}

TEST_CASE("spike changes only the actuation path until feedback couples") {
    SimConfig attacked = preset_sim("attack1_comp");
    SimConfig clean = attacked;
    clean.attack.scenario = AttackScenario::None;
    const IdsBundle& bundle = bundle_for("attack1_comp");

    const RunResult ra = run_scenario(attacked, &bundle);
    const RunResult rc = run_scenario(clean, &bundle);
    REQUIRE(ra.trace.rows.size() == rc.trace.rows.size());

    std::size_t onset = ra.trace.rows.size();
    for (std::size_t i = 0; i < ra.trace.rows.size(); ++i) {
        if (ra.trace.rows[i].a_applied != ra.trace.rows[i].a_cmd) {
            onset = i;
            break;
        }
    }
    REQUIRE(onset < ra.trace.rows.size());

    for (std::size_t i = 0; i <= onset; ++i) {
        const auto& a = ra.trace.rows[i];
        const auto& c = rc.trace.rows[i];
        CHECK(a.x_ego == c.x_ego);
        CHECK(a.v_ego == c.v_ego);
        CHECK(a.a_cmd == c.a_cmd);
        CHECK(a.d_safe_used == c.d_safe_used);
        if (i < onset) CHECK(a.a_applied == c.a_applied);
    }
    // exactly one plant step later the ego states diverge
    CHECK(ra.trace.rows[onset + 1].v_ego != rc.trace.rows[onset + 1].v_ego);
}

TEST_CASE("reference bias changes only the reference path at onset") {
    SimConfig attacked = preset_sim("attack2_nocomp");
    SimConfig clean = attacked;
    clean.attack.scenario = AttackScenario::None;
    const IdsBundle& bundle = bundle_for("attack2_nocomp");

    const RunResult ra = run_scenario(attacked, &bundle);
    const RunResult rc = run_scenario(clean, &bundle);

    std::size_t onset = ra.trace.rows.size();
    for (std::size_t i = 0; i < ra.trace.rows.size(); ++i) {
        if (ra.trace.rows[i].d_safe_used != rc.trace.rows[i].d_safe_used) {
            onset = i;
            break;
        }
    }
    REQUIRE(onset < ra.trace.rows.size());
    CHECK(ra.trace.rows[onset].t >= 40.0);

    // plant columns identical through the onset row, diverging one step later
    for (std::size_t i = 0; i <= onset; ++i) {
        CHECK(ra.trace.rows[i].x_ego == rc.trace.rows[i].x_ego);
        CHECK(ra.trace.rows[i].v_ego == rc.trace.rows[i].v_ego);
    }
    CHECK(ra.trace.rows[onset + 1].v_ego != rc.trace.rows[onset + 1].v_ego);
}

TEST_CASE("collision terminates the run early with the flag set") {
    SimConfig cfg;
    cfg.ids.enabled = false;
    cfg.x0_lead = 12.0;
    cfg.x0_ego = 10.0;
    cfg.v0_lead = 10.0;
    cfg.v0_ego = 30.0;
    cfg.duration_s = 20.0;
    const RunResult rr = run_scenario(cfg, nullptr);
    CHECK(rr.metrics.collision);
    CHECK(rr.trace.rows.size() < 200);
    CHECK(rr.trace.rows.back().d_rel <= 0.0);
}

TEST_CASE("behavioral ego drivers settle toward the lead speed") {
    SimConfig cfg;
    cfg.ids.enabled = false;
    cfg.attack.scenario = AttackScenario::None;
    cfg.duration_s = 60.0;
    cfg.lead_segments = {{0.0, 0.0}};

    cfg.ego_driver = EgoDriver::Combined;
    const RunResult combined = run_scenario(cfg, nullptr);
    CHECK_FALSE(combined.metrics.collision);
    CHECK(std::abs(combined.trace.rows.back().v_ego - 25.0) < 1.0);

    cfg.ego_driver = EgoDriver::OptimalVelocity;
    const RunResult ovm = run_scenario(cfg, nullptr);
    CHECK_FALSE(ovm.metrics.collision);
    CHECK(std::abs(ovm.trace.rows.back().v_ego - 25.0) < 1.0);

    // follow-the-leader couples as alpha*v_rel/d_rel: the speed error decays
    // like e0 - alpha*ln(d/d0), so a weak alpha never closes it; use a firm one
    cfg.ego_driver = EgoDriver::FollowLeader;
    cfg.behavior.alpha = 20.0;
    const RunResult ftl = run_scenario(cfg, nullptr);
    CHECK_FALSE(ftl.metrics.collision);
    CHECK(std::abs(ftl.trace.rows.back().v_ego - 25.0) < 0.5);
    // it also shows up in the trace as the main-controller slot with no IDS
    CHECK(std::isnan(ftl.trace.rows.back().y_nn));
}

TEST_CASE("behavioral drivers cannot be combined with attacks or the IDS") {
    SimConfig cfg;
    cfg.ego_driver = EgoDriver::Combined;
    cfg.ids.enabled = true;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.ids.enabled = false;
    cfg.attack.scenario = AttackScenario::Spike;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("identifier fidelity on the later, unseen part of the run") {
    const IdsBundle& bundle = bundle_for("nominal");
    const RunResult& rr = run_preset("nominal");

    // residual std over [35, 60) per mode, compared to the calibration sigma
    std::map<Mode, std::vector<double>> res;
    for (std::size_t i = 0; i < rr.trace.rows.size(); ++i) {
        const auto& r = rr.trace.rows[i];
        if (r.t < 35.0 || r.t >= 60.0 || std::isnan(r.residual)) continue;
        res[r.mode].push_back(r.residual);
    }
    for (const auto& [mode, values] : res) {
        if (values.size() < 30) continue;
        double mu = 0.0;
        for (double v : values) mu += v;
        mu /= values.size();
        double var = 0.0;
        for (double v : values) var += (v - mu) * (v - mu);
        const double sd = std::sqrt(var / (values.size() - 1));
        const ThresholdEntry& entry = bundle.thresholds.for_mode(mode);
        CHECK(sd <= 2.0 * entry.sigma);
    }
}

TEST_CASE("calibration-window false-alarm rate stays under 0.1% at k=3") {
    for (const bool noisy : {false, true}) {
        SimConfig cfg = preset_sim("nominal");
        if (noisy) {
            cfg.noise.vel_std = 0.02;
            cfg.noise.dist_std = 0.05;
            cfg.seed = 77;
        }
        const IdsBundle bundle = train_on_nominal(cfg);
        const ThresholdSet k3 = [&] {
            ThresholdSet t = bundle.thresholds;
            // re-derive the band at k=3 from the calibrated sigmas
            t.k = 3.0;
            return t;
        }();

        const RunResult rr = run_scenario(cfg, &bundle);
        long triggers = 0, samples = 0, consec = 0;
        for (const auto& r : rr.trace.rows) {
            if (r.t < cfg.ids.calib_start_s || r.t >= cfg.ids.calib_end_s) continue;
            if (std::isnan(r.residual)) continue;
            ++samples;
            if (exceeds_threshold(k3, r.mode, r.residual)) {
                if (++consec >= 2) ++triggers;
            } else {
                consec = 0;
            }
        }
        REQUIRE(samples > 250);
        CHECK(static_cast<double>(triggers) / samples <= 0.001);
    }
}

TEST_CASE("compute_metrics on hand-built traces") {
    SimTrace trace;
    for (int i = 0; i < 100; ++i) {
        TraceRow r;
        r.t = 0.1 * i;
        r.d_rel = 50.0;
        r.d_safe_true = 38.0;
        r.a_cmd = 1.0;
        r.a_applied = 1.0;
        trace.rows.push_back(r);
    }
    AttackSpec none;
    Metrics m = compute_metrics(trace, none);
    CHECK(m.violation_duration == 0.0);
    CHECK_FALSE(m.detection_latency.has_value());
    CHECK(m.min_d_rel == 50.0);
    CHECK_FALSE(m.collision);

    // spike onset at t=4.0, alarm at t=4.2
    AttackSpec spike;
    spike.scenario = AttackScenario::Spike;
    trace.rows[40].a_applied = 2.0;
    for (int i = 42; i < 100; ++i) trace.rows[i].alarm = true;
    m = compute_metrics(trace, spike);
    REQUIRE(m.detection_latency.has_value());
    CHECK(*m.detection_latency == doctest::Approx(0.2));

    CHECK_THROWS_AS(compute_metrics(SimTrace{}, none), std::invalid_argument);
}

TEST_CASE("training data window errors") {
    SimConfig cfg = preset_sim("nominal");
    cfg.duration_s = 20.0;  // shorter than the calibration window
    CHECK_THROWS_AS(train_on_nominal(cfg), TrainingError);
}
