#include "accsim/controller.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "accsim/errors.hpp"

namespace accsim {
namespace {

constexpr int kQpMaxIter = 100;
constexpr double kQpKktTol = 1e-8;

// Dense box-constrained QP: minimize 0.5 u'Hu + c'u over lo <= u <= hi.
// Primal active-set iteration; H must be positive definite (guaranteed here
// by w_track > 0 plus the move-penalty regularization).
std::vector<double> solve_box_qp(const std::vector<std::vector<double>>& h,
                                 const std::vector<double>& c, double lo, double hi) {
    const int n = static_cast<int>(c.size());
    enum class BoundState { Free, AtLo, AtHi };
    std::vector<BoundState> bs(n, BoundState::Free);
    std::vector<double> u(n, 0.0);

    auto solve_free_subsystem = [&]() {
        std::vector<int> free_idx;
        for (int j = 0; j < n; ++j)
            if (bs[j] == BoundState::Free) free_idx.push_back(j);
        const int m = static_cast<int>(free_idx.size());
        if (m == 0) return;
        // rhs = -(c_F + H_FB u_B)
        std::vector<std::vector<double>> a(m, std::vector<double>(m + 1, 0.0));
        for (int r = 0; r < m; ++r) {
            const int i = free_idx[r];
            double rhs = -c[i];
            for (int j = 0; j < n; ++j) {
                if (bs[j] == BoundState::Free) continue;
                rhs -= h[i][j] * u[j];
            }
            a[r][m] = rhs;
            for (int cidx = 0; cidx < m; ++cidx) a[r][cidx] = h[i][free_idx[cidx]];
        }
        // Gaussian elimination with partial pivoting.
        for (int col = 0; col < m; ++col) {
            int piv = col;
            for (int r = col + 1; r < m; ++r)
                if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
            if (std::abs(a[piv][col]) < 1e-14) {
                throw ControllerFault("mpc: singular QP subsystem");
            }
            std::swap(a[col], a[piv]);
            for (int r = 0; r < m; ++r) {
                if (r == col) continue;
                const double f = a[r][col] / a[col][col];
                for (int k = col; k <= m; ++k) a[r][k] -= f * a[col][k];
            }
        }
        for (int r = 0; r < m; ++r) u[free_idx[r]] = a[r][m] / a[r][r];
    };

    auto gradient = [&](int i) {
        double g = c[i];
        for (int j = 0; j < n; ++j) g += h[i][j] * u[j];
        return g;
    };

    for (int iter = 0; iter < kQpMaxIter; ++iter) {
        solve_free_subsystem();

        // Clamp the most violated free variable, if any.
        int worst = -1;
        double worst_viol = 0.0;
        for (int j = 0; j < n; ++j) {
            if (bs[j] != BoundState::Free) continue;
            const double viol = std::max(lo - u[j], u[j] - hi);
            if (viol > worst_viol) {
                worst_viol = viol;
                worst = j;
            }
        }
        if (worst >= 0 && worst_viol > 0.0) {
            if (u[worst] < lo) {
                u[worst] = lo;
                bs[worst] = BoundState::AtLo;
            } else {
                u[worst] = hi;
                bs[worst] = BoundState::AtHi;
            }
            continue;
        }

        // Feasible; release the bound variable with the worst multiplier sign.
        int release = -1;
        double release_viol = 0.0;
        for (int j = 0; j < n; ++j) {
            if (bs[j] == BoundState::Free) continue;
            const double g = gradient(j);
            const double viol = (bs[j] == BoundState::AtLo) ? -g : g;
            if (viol > release_viol) {
                release_viol = viol;
                release = j;
            }
        }
        if (release >= 0 && release_viol > kQpKktTol) {
            bs[release] = BoundState::Free;
            continue;
        }

        // KKT check via the projected-gradient residual.
        double kkt = 0.0;
        for (int j = 0; j < n; ++j) {
            const double stepped = std::clamp(u[j] - gradient(j), lo, hi);
            kkt = std::max(kkt, std::abs(stepped - u[j]));
        }
        if (kkt <= kQpKktTol * std::max(1.0, std::abs(hi - lo))) return u;
    }
    throw ControllerFault("mpc: QP did not converge within iteration cap");
}

// Prediction state for the tracking problem: ego velocity, actuator lag and
// (spacing mode) the relative distance under constant lead velocity.
struct PredState {
    double v = 0.0;
    double a = 0.0;
    double d = 0.0;
};

}  // namespace

void AccConfig::validate() const {
    if (!(a_min < 0.0 && 0.0 < a_max)) throw std::invalid_argument("acc: need a_min < 0 < a_max");
    if (!(v_set > 0.0)) throw std::invalid_argument("acc: v_set must be > 0");
    if (t_gap < 0.0) throw std::invalid_argument("acc: t_gap must be >= 0");
    if (!(d_default > 0.0)) throw std::invalid_argument("acc: d_default must be > 0");
    if (mpc.horizon_m < 1 || mpc.horizon_m > mpc.horizon_p)
        throw std::invalid_argument("acc: need 1 <= horizon_m <= horizon_p");
    if (!(mpc.w_track > 0.0)) throw std::invalid_argument("acc: w_track must be > 0");
    if (mpc.w_du < 0.0 || mpc.w_u < 0.0) throw std::invalid_argument("acc: weights must be >= 0");
}

double safe_distance(double v_ego, double t_gap, double d_default) {
    if (!std::isfinite(v_ego) || t_gap < 0.0 || !(d_default > 0.0)) {
        throw std::invalid_argument("safe_distance: invalid inputs");
    }
    return d_default + t_gap * v_ego;
}

Mode select_mode(double d_rel, double d_safe) {
    return d_rel >= d_safe ? Mode::SpeedControl : Mode::SpacingControl;
}

std::vector<double> mpc_moves(const AccConfig& cfg, const DiscretePlant& plant,
                              Mode mode, const Measurements& meas, double prev_u,
                              std::optional<double> spacing_ref) {
    if (!std::isfinite(meas.v_ego) || !std::isfinite(meas.d_rel) ||
        !std::isfinite(meas.v_rel) || !std::isfinite(meas.lag_accel) ||
        !std::isfinite(prev_u)) {
        throw std::invalid_argument("mpc_step: non-finite measurement");
    }
    const MpcParams& mp = cfg.mpc;
    const int p = mp.horizon_p;
    const int m = mp.horizon_m;
    const double ts = plant.ts;
    const double av_v = plant.a_d[1][1];  // 1
    const double av_a = plant.a_d[1][2];
    const double aa_a = plant.a_d[2][2];
    const double bv = plant.b_d[1];
    const double ba = plant.b_d[2];
    const double v_lead = meas.v_ego + meas.v_rel;

    const bool spacing = (mode == Mode::SpacingControl);
    const double ref = spacing
                           ? spacing_ref.value_or(safe_distance(meas.v_ego, cfg.t_gap, cfg.d_default))
                           : cfg.v_set;

    // One horizon simulation; move blocking picks u[min(k, m-1)] at step k.
    // homogeneous=true drops the affine terms so columns of the input map can
    // be built by superposition.
    auto simulate = [&](const std::vector<double>& u, bool homogeneous) {
        PredState s;
        if (!homogeneous) {
            s.v = meas.v_ego;
            s.a = meas.lag_accel;
            s.d = meas.d_rel;
        }
        std::vector<double> y(p);
        for (int k = 0; k < p; ++k) {
            const double uk = u[std::min(k, m - 1)];
            const double v_next = av_v * s.v + av_a * s.a + bv * uk;
            const double a_next = aa_a * s.a + ba * uk;
            const double d_next = s.d + ((homogeneous ? 0.0 : v_lead) - s.v) * ts;
            s.v = v_next;
            s.a = a_next;
            s.d = d_next;
            y[k] = spacing ? s.d : s.v;
        }
        return y;
    };

    const std::vector<double> zero(m, 0.0);
    const std::vector<double> y_free = simulate(zero, false);
    std::vector<std::vector<double>> phi(m);
    for (int j = 0; j < m; ++j) {
        std::vector<double> e(m, 0.0);
        e[j] = 1.0;
        phi[j] = simulate(e, true);
    }

    // H = 2(w_track Phi'Phi + w_du L'L + w_u I), c = 2(w_track Phi'(y_free - r) - w_du L'l0)
    std::vector<std::vector<double>> h(m, std::vector<double>(m, 0.0));
    std::vector<double> c(m, 0.0);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            double acc = 0.0;
            for (int k = 0; k < p; ++k) acc += phi[i][k] * phi[j][k];
            h[i][j] = 2.0 * mp.w_track * acc;
        }
        double acc = 0.0;
        for (int k = 0; k < p; ++k) acc += phi[i][k] * (y_free[k] - ref);
        c[i] = 2.0 * mp.w_track * acc;
        h[i][i] += 2.0 * mp.w_u;
    }
    for (int j = 0; j < m; ++j) {
        // L'L is tridiagonal: diag 2 except last 1, off-diagonals -1.
        const double diag = (j + 1 < m) ? 2.0 : 1.0;
        h[j][j] += 2.0 * mp.w_du * diag;
        if (j + 1 < m) {
            h[j][j + 1] += -2.0 * mp.w_du;
            h[j + 1][j] += -2.0 * mp.w_du;
        }
    }
    c[0] += -2.0 * mp.w_du * prev_u;

    return solve_box_qp(h, c, cfg.a_min, cfg.a_max);
}

double mpc_step(const AccConfig& cfg, const DiscretePlant& plant, Mode mode,
                const Measurements& meas, double prev_u,
                std::optional<double> spacing_ref) {
    const std::vector<double> u = mpc_moves(cfg, plant, mode, meas, prev_u, spacing_ref);
    return std::clamp(u[0], cfg.a_min, cfg.a_max);
}

double p_step(const AccConfig& cfg, Mode mode, const Measurements& meas) {
    if (!std::isfinite(meas.v_ego) || !std::isfinite(meas.d_rel) || !std::isfinite(meas.v_rel)) {
        throw std::invalid_argument("p_step: non-finite measurement");
    }
    double u = 0.0;
    if (mode == Mode::SpeedControl) {
        u = cfg.kp_speed * (cfg.v_set - meas.v_ego);
    } else {
        const double d_safe = safe_distance(meas.v_ego, cfg.t_gap, cfg.d_default);
        u = cfg.kp_space * (meas.d_rel - d_safe) + cfg.kd_rel * meas.v_rel;
    }
    return std::clamp(u, cfg.a_min, cfg.a_max);
}

ControlDecision control_step(const AccConfig& cfg, const DiscretePlant& plant,
                             const Measurements& meas, bool alarm_latched,
                             double prev_u, std::optional<double> d_safe_override) {
    ControlDecision dec;
    const double d_safe_own = safe_distance(meas.v_ego, cfg.t_gap, cfg.d_default);
    if (alarm_latched) {
        dec.active_controller = ActiveController::Compensator;
        dec.mode = select_mode(meas.d_rel, d_safe_own);
        dec.accel_cmd = p_step(cfg, dec.mode, meas);
        dec.reference_used = dec.mode == Mode::SpeedControl ? cfg.v_set : d_safe_own;
    } else {
        const double d_safe = d_safe_override.value_or(d_safe_own);
        dec.active_controller = ActiveController::Mpc;
        dec.mode = select_mode(meas.d_rel, d_safe);
        dec.accel_cmd = mpc_step(cfg, plant, dec.mode, meas, prev_u, d_safe);
        dec.reference_used = dec.mode == Mode::SpeedControl ? cfg.v_set : d_safe;
    }
    return dec;
}

}  // namespace accsim
