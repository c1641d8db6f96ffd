#pragma once

namespace uot {

/// One classical fourth-order Runge-Kutta step from t0 to t0 + h.
///
/// Generic over the state representation: `rhs(y, t)` returns the derivative
/// as a State, `axpy(y, c, k)` returns y + c*k. Stage times are passed in
/// explicitly so callers can construct them exactly from the step index.
/// The same core drives both the tape-valued trajectory integration and the
/// plain-number integrations used by oracles and exports.
template <class State, class Rhs, class Axpy>
State rk4_step(Rhs&& rhs, Axpy&& axpy, const State& y, double t0, double t_mid, double t_end,
               double h) {
    State k1 = rhs(y, t0);
    State y2 = axpy(y, 0.5 * h, k1);
    State k2 = rhs(y2, t_mid);
    State y3 = axpy(y, 0.5 * h, k2);
    State k3 = rhs(y3, t_mid);
    State y4 = axpy(y, h, k3);
    State k4 = rhs(y4, t_end);
    State acc = axpy(k1, 2.0, k2);
    acc = axpy(acc, 2.0, k3);
    acc = axpy(acc, 1.0, k4);
    return axpy(y, h / 6.0, acc);
}

}  // namespace uot
