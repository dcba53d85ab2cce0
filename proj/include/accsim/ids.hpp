#pragma once

#include <deque>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "accsim/controller.hpp"

namespace accsim {

// Lag structure of the one-step predictor: n_y past outputs then n_u past
// inputs, most recent first.
struct RegressorSpec {
    int n_u = 2;
    int n_y = 2;
    int dim() const { return n_u + n_y; }
};

struct IoSample {
    double u = 0.0;  // actuation command as sent by the controller
    double y = 0.0;  // measured ego velocity
};

struct TrainingParams {
    int hidden = 8;
    int epochs = 200;          // Levenberg-Marquardt iteration cap
    double lambda_init = 0.01; // initial LM damping
    unsigned seed = 7;
    double rmse_cap = 0.05;    // validation gate, output units (m/s)
    double val_fraction = 0.2;
};

// One-hidden-layer tanh MLP with input/output normalization.
struct IdentifierModel {
    RegressorSpec regressor;
    int hidden = 8;
    std::vector<double> w1;  // hidden x dim, row-major
    std::vector<double> b1;  // hidden
    std::vector<double> w2;  // hidden
    double b2 = 0.0;
    std::vector<double> in_mean, in_scale;
    double out_mean = 0.0;
    double out_scale = 1.0;
    double train_rmse = 0.0;
    double val_rmse = 0.0;

    // reg must have regressor.dim() entries ordered
    // [y(t-1)..y(t-n_y), u(t-1)..u(t-n_u)].
    double predict(std::span<const double> reg) const;
};

// Gradient training (damped Gauss-Newton / Levenberg-Marquardt on the
// batch squared error) of the one-step predictor on a safe trace. The last
// val_fraction of the samples is held out; throws TrainingError if the trace
// is shorter than 10x the parameter count or the held-out RMSE ends above
// rmse_cap. Deterministic for a fixed seed.
IdentifierModel train_identifier(std::span<const IoSample> safe_trace,
                                 RegressorSpec spec, const TrainingParams& params);

// One-step RMSE of the model over a trace (regressors rebuilt internally).
double evaluate_rmse(const IdentifierModel& model, std::span<const IoSample> trace);

struct ThresholdEntry {
    double mu = 0.0;
    double sigma = 1.0;
    bool pooled_fallback = false;  // set when the mode had too few samples
};

// Per-mode residual statistics and the alarm band |e - mu| > k*sigma.
struct ThresholdSet {
    ThresholdEntry speed;
    ThresholdEntry spacing;
    double k = 4.0;
    int n_consec = 2;
    const ThresholdEntry& for_mode(Mode m) const {
        return m == Mode::SpeedControl ? speed : spacing;
    }
};

struct LabeledSample {
    double u = 0.0;
    double y = 0.0;
    Mode mode = Mode::SpeedControl;
};

// Per-mode mean/std of the residuals y - y_nn over the safe trace. A mode
// with fewer than min_mode_samples residuals falls back to the pooled
// statistics; sigma is floored at sigma_floor either way.
ThresholdSet calibrate_threshold(const IdentifierModel& model,
                                 std::span<const LabeledSample> safe_trace, double k,
                                 double sigma_floor = 1e-4, int min_mode_samples = 30);

// erfc(k/sqrt(2)): probability that a Gaussian residual falls outside mu +- k*sigma.
// Throws std::invalid_argument for k < 0.
double false_positive_prob(double k);

bool exceeds_threshold(const ThresholdSet& thresholds, Mode mode, double residual);

// Rolling window of recent inputs/outputs feeding the predictor.
class RegressorBuffer {
public:
    RegressorBuffer() = default;
    explicit RegressorBuffer(RegressorSpec spec) : spec_(spec) {}
    void push(double u, double y);
    bool ready() const;
    std::vector<double> assemble() const;  // throws std::logic_error if not ready
    void clear();

private:
    RegressorSpec spec_;
    std::deque<double> us_, ys_;  // most recent at front
};

struct IdsState {
    bool alarm_latched = false;
    std::optional<double> first_alarm_time;
    int consec_count = 0;
    RegressorBuffer buffer;

    void latch(double t);
};

// One detection step on the residual y_out - y_nn. The alarm latches at the
// n_consec-th consecutive exceedance and never resets within a run.
IdsState detect(IdsState state, const ThresholdSet& thresholds, Mode mode,
                double y_out, double y_nn, double t);

// Versioned model file (JSON) bundling the identifier and its thresholds.
void save_model_file(const std::string& path, const IdentifierModel& model,
                     const ThresholdSet& thresholds);
std::pair<IdentifierModel, ThresholdSet> load_model_file(const std::string& path);

}  // namespace accsim
