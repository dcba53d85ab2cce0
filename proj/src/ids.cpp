#include "accsim/ids.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "accsim/errors.hpp"

namespace accsim {
namespace {

using json = nlohmann::json;

constexpr int kModelFileVersion = 1;

struct Dataset {
    std::vector<std::vector<double>> inputs;
    std::vector<double> targets;
};

// Regressor rows [y(t-1)..y(t-n_y), u(t-1)..u(t-n_u)] -> target y(t).
Dataset build_dataset(std::span<const IoSample> trace, RegressorSpec spec) {
    Dataset ds;
    const int warm = std::max(spec.n_u, spec.n_y);
    for (std::size_t i = warm; i < trace.size(); ++i) {
        std::vector<double> row;
        row.reserve(spec.dim());
        for (int l = 1; l <= spec.n_y; ++l) row.push_back(trace[i - l].y);
        for (int l = 1; l <= spec.n_u; ++l) row.push_back(trace[i - l].u);
        ds.inputs.push_back(std::move(row));
        ds.targets.push_back(trace[i].y);
    }
    return ds;
}

double mean_of(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double stddev_of(const std::vector<double>& xs, double mu) {
    if (xs.size() < 2) return 0.0;
    double s = 0.0;
    for (double x : xs) s += (x - mu) * (x - mu);
    return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

}  // namespace

double IdentifierModel::predict(std::span<const double> reg) const {
    if (static_cast<int>(reg.size()) != regressor.dim()) {
        throw std::invalid_argument("predict: regressor size mismatch");
    }
    const int dim = regressor.dim();
    double out = b2;
    for (int h = 0; h < hidden; ++h) {
        double z = b1[h];
        for (int i = 0; i < dim; ++i) {
            z += w1[h * dim + i] * (reg[i] - in_mean[i]) / in_scale[i];
        }
        out += w2[h] * std::tanh(z);
    }
    return out * out_scale + out_mean;
}

IdentifierModel train_identifier(std::span<const IoSample> safe_trace,
                                 RegressorSpec spec, const TrainingParams& params) {
    const int dim = spec.dim();
    const int hid = params.hidden;
    const int n_params = dim * hid + hid + hid + 1;
    Dataset ds = build_dataset(safe_trace, spec);
    const int n = static_cast<int>(ds.inputs.size());
    if (n < 10 * n_params) {
        throw TrainingError("train_identifier: need at least " +
                            std::to_string(10 * n_params) + " samples, got " +
                            std::to_string(n));
    }

    // Time-ordered split; the tail is held out for the rmse_cap gate.
    const int n_val = std::max(1, static_cast<int>(std::lround(n * params.val_fraction)));
    const int n_train = n - n_val;

    IdentifierModel model;
    model.regressor = spec;
    model.hidden = hid;
    model.in_mean.assign(dim, 0.0);
    model.in_scale.assign(dim, 1.0);
    for (int i = 0; i < dim; ++i) {
        std::vector<double> col(n_train);
        for (int r = 0; r < n_train; ++r) col[r] = ds.inputs[r][i];
        model.in_mean[i] = mean_of(col);
        model.in_scale[i] = std::max(stddev_of(col, model.in_mean[i]), 1e-9);
    }
    {
        std::vector<double> tgt(ds.targets.begin(), ds.targets.begin() + n_train);
        model.out_mean = mean_of(tgt);
        model.out_scale = std::max(stddev_of(tgt, model.out_mean), 1e-9);
    }

    // Normalized copies of the training block.
    std::vector<std::vector<double>> xn(n_train, std::vector<double>(dim));
    std::vector<double> tn(n_train);
    for (int r = 0; r < n_train; ++r) {
        for (int i = 0; i < dim; ++i) {
            xn[r][i] = (ds.inputs[r][i] - model.in_mean[i]) / model.in_scale[i];
        }
        tn[r] = (ds.targets[r] - model.out_mean) / model.out_scale;
    }

    std::mt19937 rng(params.seed);
    const double a1 = std::sqrt(6.0 / (dim + hid));
    const double a2 = std::sqrt(6.0 / (hid + 1));
    std::uniform_real_distribution<double> u1(-a1, a1), u2(-a2, a2);
    model.w1.resize(static_cast<std::size_t>(dim) * hid);
    model.b1.assign(hid, 0.0);
    model.w2.resize(hid);
    for (auto& w : model.w1) w = u1(rng);
    for (auto& w : model.w2) w = u2(rng);
    model.b2 = 0.0;

    // Batch Levenberg-Marquardt on the normalized squared error. Parameter
    // vector layout: w1 | b1 | w2 | b2. Plain Adam/SGD stalls around 1e-2 RMSE
    // on this problem (near-collinear velocity lags); the damped Gauss-Newton
    // step reaches the identifiability floor in a couple hundred iterations.
    const int nw = n_params;
    std::vector<double> w(nw);
    auto pack = [&]() {
        int idx = 0;
        for (int i = 0; i < dim * hid; ++i) w[idx++] = model.w1[i];
        for (int h = 0; h < hid; ++h) w[idx++] = model.b1[h];
        for (int h = 0; h < hid; ++h) w[idx++] = model.w2[h];
        w[idx] = model.b2;
    };
    auto unpack = [&](const std::vector<double>& src) {
        int idx = 0;
        for (int i = 0; i < dim * hid; ++i) model.w1[i] = src[idx++];
        for (int h = 0; h < hid; ++h) model.b1[h] = src[idx++];
        for (int h = 0; h < hid; ++h) model.w2[h] = src[idx++];
        model.b2 = src[idx];
    };
    pack();

    std::vector<double> th(hid);
    auto forward = [&](const std::vector<double>& wt, int r, std::vector<double>* tanh_out) {
        double out = wt[nw - 1];
        for (int h = 0; h < hid; ++h) {
            double z = wt[dim * hid + h];
            for (int i = 0; i < dim; ++i) z += wt[h * dim + i] * xn[r][i];
            const double t = std::tanh(z);
            if (tanh_out) (*tanh_out)[h] = t;
            out += wt[dim * hid + hid + h] * t;
        }
        return out;
    };
    auto sse = [&](const std::vector<double>& wt) {
        double s = 0.0;
        for (int r = 0; r < n_train; ++r) {
            const double e = forward(wt, r, nullptr) - tn[r];
            s += e * e;
        }
        return s;
    };

    std::vector<std::vector<double>> jtj(nw, std::vector<double>(nw));
    std::vector<double> jtr(nw), jrow(nw), delta(nw);
    double lambda = params.lambda_init;
    double cur_sse = sse(w);
    for (int iter = 0; iter < params.epochs; ++iter) {
        for (auto& row : jtj) std::fill(row.begin(), row.end(), 0.0);
        std::fill(jtr.begin(), jtr.end(), 0.0);
        for (int r = 0; r < n_train; ++r) {
            const double err = forward(w, r, &th) - tn[r];
            for (int h = 0; h < hid; ++h) {
                const double dh = w[dim * hid + hid + h] * (1.0 - th[h] * th[h]);
                for (int i = 0; i < dim; ++i) jrow[h * dim + i] = dh * xn[r][i];
                jrow[dim * hid + h] = dh;
                jrow[dim * hid + hid + h] = th[h];
            }
            jrow[nw - 1] = 1.0;
            for (int i = 0; i < nw; ++i) {
                jtr[i] += jrow[i] * err;
                for (int j = i; j < nw; ++j) jtj[i][j] += jrow[i] * jrow[j];
            }
        }
        for (int i = 0; i < nw; ++i)
            for (int j = 0; j < i; ++j) jtj[i][j] = jtj[j][i];

        bool accepted = false;
        for (int tries = 0; tries < 12 && !accepted; ++tries) {
            std::vector<std::vector<double>> a = jtj;
            std::vector<double> b = jtr;
            for (int i = 0; i < nw; ++i) a[i][i] += lambda * std::max(jtj[i][i], 1e-12);
            // Gaussian elimination with partial pivoting
            bool singular = false;
            for (int c = 0; c < nw && !singular; ++c) {
                int piv = c;
                for (int r2 = c + 1; r2 < nw; ++r2)
                    if (std::abs(a[r2][c]) > std::abs(a[piv][c])) piv = r2;
                if (std::abs(a[piv][c]) < 1e-300) {
                    singular = true;
                    break;
                }
                std::swap(a[c], a[piv]);
                std::swap(b[c], b[piv]);
                for (int r2 = c + 1; r2 < nw; ++r2) {
                    const double f = a[r2][c] / a[c][c];
                    for (int k = c; k < nw; ++k) a[r2][k] -= f * a[c][k];
                    b[r2] -= f * b[c];
                }
            }
            if (singular) {
                lambda *= 4.0;
                continue;
            }
            for (int c = nw - 1; c >= 0; --c) {
                double s = b[c];
                for (int k = c + 1; k < nw; ++k) s -= a[c][k] * delta[k];
                delta[c] = s / a[c][c];
            }
            std::vector<double> wt = w;
            for (int i = 0; i < nw; ++i) wt[i] -= delta[i];
            const double trial = sse(wt);
            if (trial < cur_sse) {
                w = wt;
                cur_sse = trial;
                lambda = std::max(lambda * 0.25, 1e-12);
                accepted = true;
            } else {
                lambda *= 4.0;
            }
        }
        if (!accepted) break;  // stalled: no damping level improves the fit
        if (std::sqrt(cur_sse / n_train) < 1e-9) break;
    }
    unpack(w);

    auto block_rmse = [&](int begin, int end) {
        double se = 0.0;
        for (int r = begin; r < end; ++r) {
            const double yhat = model.predict(ds.inputs[r]);
            se += (yhat - ds.targets[r]) * (yhat - ds.targets[r]);
        }
        return std::sqrt(se / std::max(1, end - begin));
    };
    model.train_rmse = block_rmse(0, n_train);
    model.val_rmse = block_rmse(n_train, n);
    if (model.val_rmse > params.rmse_cap) {
        throw TrainingError("train_identifier: held-out RMSE " +
                            std::to_string(model.val_rmse) + " exceeds cap " +
                            std::to_string(params.rmse_cap));
    }
    return model;
}

double evaluate_rmse(const IdentifierModel& model, std::span<const IoSample> trace) {
    Dataset ds = build_dataset(trace, model.regressor);
    if (ds.inputs.empty()) throw std::invalid_argument("evaluate_rmse: trace too short");
    double se = 0.0;
    for (std::size_t r = 0; r < ds.inputs.size(); ++r) {
        const double yhat = model.predict(ds.inputs[r]);
        se += (yhat - ds.targets[r]) * (yhat - ds.targets[r]);
    }
    return std::sqrt(se / static_cast<double>(ds.inputs.size()));
}

ThresholdSet calibrate_threshold(const IdentifierModel& model,
                                 std::span<const LabeledSample> safe_trace, double k,
                                 double sigma_floor, int min_mode_samples) {
    if (!(k > 0.0)) throw std::invalid_argument("calibrate_threshold: k must be > 0");
    if (!(sigma_floor > 0.0)) throw std::invalid_argument("calibrate_threshold: sigma_floor must be > 0");

    const RegressorSpec spec = model.regressor;
    const int warm = std::max(spec.n_u, spec.n_y);
    std::vector<double> pooled, speed_res, spacing_res;
    std::vector<double> reg(spec.dim());
    for (std::size_t i = warm; i < safe_trace.size(); ++i) {
        int idx = 0;
        for (int l = 1; l <= spec.n_y; ++l) reg[idx++] = safe_trace[i - l].y;
        for (int l = 1; l <= spec.n_u; ++l) reg[idx++] = safe_trace[i - l].u;
        const double e = safe_trace[i].y - model.predict(reg);
        pooled.push_back(e);
        (safe_trace[i].mode == Mode::SpeedControl ? speed_res : spacing_res).push_back(e);
    }
    if (pooled.empty()) throw std::invalid_argument("calibrate_threshold: empty safe trace");

    const double pooled_mu = mean_of(pooled);
    const double pooled_sigma = std::max(stddev_of(pooled, pooled_mu), sigma_floor);
    auto make_entry = [&](const std::vector<double>& res) {
        ThresholdEntry entry;
        if (static_cast<int>(res.size()) < min_mode_samples) {
            entry.mu = pooled_mu;
            entry.sigma = pooled_sigma;
            entry.pooled_fallback = true;
        } else {
            entry.mu = mean_of(res);
            entry.sigma = std::max(stddev_of(res, entry.mu), sigma_floor);
        }
        return entry;
    };

    ThresholdSet set;
    set.k = k;
    set.speed = make_entry(speed_res);
    set.spacing = make_entry(spacing_res);
    return set;
}

double false_positive_prob(double k) {
    if (k < 0.0) throw std::invalid_argument("false_positive_prob: k must be >= 0");
    return std::erfc(k / std::sqrt(2.0));
}

bool exceeds_threshold(const ThresholdSet& thresholds, Mode mode, double residual) {
    const ThresholdEntry& e = thresholds.for_mode(mode);
    return std::abs(residual - e.mu) > thresholds.k * e.sigma;
}

void RegressorBuffer::push(double u, double y) {
    us_.push_front(u);
    ys_.push_front(y);
    while (static_cast<int>(us_.size()) > spec_.n_u) us_.pop_back();
    while (static_cast<int>(ys_.size()) > spec_.n_y) ys_.pop_back();
}

bool RegressorBuffer::ready() const {
    return static_cast<int>(us_.size()) == spec_.n_u &&
           static_cast<int>(ys_.size()) == spec_.n_y;
}

std::vector<double> RegressorBuffer::assemble() const {
    if (!ready()) throw std::logic_error("regressor buffer not ready");
    std::vector<double> reg;
    reg.reserve(spec_.dim());
    reg.insert(reg.end(), ys_.begin(), ys_.end());
    reg.insert(reg.end(), us_.begin(), us_.end());
    return reg;
}

void RegressorBuffer::clear() {
    us_.clear();
    ys_.clear();
}

void IdsState::latch(double t) {
    if (!alarm_latched) {
        alarm_latched = true;
        first_alarm_time = t;
    }
}

IdsState detect(IdsState state, const ThresholdSet& thresholds, Mode mode,
                double y_out, double y_nn, double t) {
    if (state.alarm_latched) return state;
    if (exceeds_threshold(thresholds, mode, y_out - y_nn)) {
        if (++state.consec_count >= thresholds.n_consec) state.latch(t);
    } else {
        state.consec_count = 0;
    }
    return state;
}

namespace {

json entry_to_json(const ThresholdEntry& e) {
    return json{{"mu", e.mu}, {"sigma", e.sigma}, {"pooled_fallback", e.pooled_fallback}};
}

ThresholdEntry entry_from_json(const json& j) {
    ThresholdEntry e;
    e.mu = j.at("mu").get<double>();
    e.sigma = j.at("sigma").get<double>();
    e.pooled_fallback = j.at("pooled_fallback").get<bool>();
    return e;
}

}  // namespace

void save_model_file(const std::string& path, const IdentifierModel& model,
                     const ThresholdSet& thresholds) {
    json j;
    j["version"] = kModelFileVersion;
    j["model"] = {
        {"n_u", model.regressor.n_u}, {"n_y", model.regressor.n_y},
        {"hidden", model.hidden},     {"w1", model.w1},
        {"b1", model.b1},             {"w2", model.w2},
        {"b2", model.b2},             {"in_mean", model.in_mean},
        {"in_scale", model.in_scale}, {"out_mean", model.out_mean},
        {"out_scale", model.out_scale}, {"train_rmse", model.train_rmse},
        {"val_rmse", model.val_rmse},
    };
    j["thresholds"] = {
        {"k", thresholds.k},
        {"n_consec", thresholds.n_consec},
        {"speed", entry_to_json(thresholds.speed)},
        {"spacing", entry_to_json(thresholds.spacing)},
    };
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write model file: " + path);
    out << j.dump(2) << "\n";
}

std::pair<IdentifierModel, ThresholdSet> load_model_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read model file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("model file parse error: " + std::string(e.what()));
    }
    if (j.value("version", -1) != kModelFileVersion) {
        throw ConfigError("model file: unsupported version");
    }
    IdentifierModel model;
    const json& jm = j.at("model");
    model.regressor.n_u = jm.at("n_u").get<int>();
    model.regressor.n_y = jm.at("n_y").get<int>();
    model.hidden = jm.at("hidden").get<int>();
    model.w1 = jm.at("w1").get<std::vector<double>>();
    model.b1 = jm.at("b1").get<std::vector<double>>();
    model.w2 = jm.at("w2").get<std::vector<double>>();
    model.b2 = jm.at("b2").get<double>();
    model.in_mean = jm.at("in_mean").get<std::vector<double>>();
    model.in_scale = jm.at("in_scale").get<std::vector<double>>();
    model.out_mean = jm.at("out_mean").get<double>();
    model.out_scale = jm.at("out_scale").get<double>();
    model.train_rmse = jm.at("train_rmse").get<double>();
    model.val_rmse = jm.at("val_rmse").get<double>();

    ThresholdSet set;
    const json& jt = j.at("thresholds");
    set.k = jt.at("k").get<double>();
    set.n_consec = jt.at("n_consec").get<int>();
    set.speed = entry_from_json(jt.at("speed"));
    set.spacing = entry_from_json(jt.at("spacing"));
    return {model, set};
}

}  // namespace accsim
