"""Shared fixtures and high-precision helpers for the test suite.

Heavy artifacts are built once per session and shared:

- ``maps_vl``: N=201 differential-node transition maps for both reference
  capacitances, built at the default grid step; the build wall time is kept
  because the acceptance suite asserts runtime budgets.
- ``map_vp_2nf``: a smaller single-ended-node map used by the harness tests.
- ``energy_table``: the 2x2 (capacitance x node) power table at K=10^4
  symbols via full transient simulation.

``mp_mode_algebra`` re-derives a mode's complete coefficient chain with
mpmath at high precision; it shares no float64 arithmetic with the library
and anchors both the coefficient-pinning checks and the ODE-residual
acceptance test.
"""

from __future__ import annotations

import time
from types import SimpleNamespace

import numpy as np
import pytest

from rectiflow import _kernels, transient
from rectiflow.circuit_core import CircuitParams
from rectiflow.harness import ExperimentConfig, run_energy_experiment
from rectiflow.statemap import build_state_maps


@pytest.fixture(scope="session")
def params_2nf():
    """Reference operating point, C_p = C_n = 2 nF."""
    return CircuitParams()


@pytest.fixture(scope="session")
def params_10nf():
    return CircuitParams().with_capacitance(10e-9)


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels(params_2nf):
    """Force jit compilation of every kernel before any timed assertion."""
    coarse = 1.0 / (64.0 * params_2nf.f_c)
    one = np.array([params_2nf.A_H])
    transient.simulate(one, params_2nf, dt=coarse, store_every=0,
                       store_events=False)
    transient.numeric_oracle_simulate(one, params_2nf, dt_fine=coarse,
                                      store_every=0)
    vals = np.linspace(0.3, 0.9, 5)
    _kernels.channel_run(np.array([0, 1], dtype=np.int8), 0.3, 4.0 / 0.6,
                         vals, vals, 0.5)
    _kernels.caad_run(np.array([0.5]), 0.3, 4.0 / 0.6, vals, vals,
                      0.3, 0.9, 0.5)
    _kernels.mlsd_block(np.array([0.5]), 0.3, 4.0 / 0.6, vals, vals, 0.5, 1)


@pytest.fixture(scope="session")
def maps_vl(params_2nf, params_10nf):
    """Default-step N=201 differential-node maps keyed by capacitance."""
    t0 = time.perf_counter()
    by_cap = {
        2e-9: build_state_maps(params_2nf, N=201, node="vl"),
        10e-9: build_state_maps(params_10nf, N=201, node="vl"),
    }
    return SimpleNamespace(by_cap=by_cap,
                           build_seconds=time.perf_counter() - t0)


@pytest.fixture(scope="session")
def map_vp_2nf(params_2nf):
    """Single-ended-node map at 2 nF, coarser grid and step (test economy)."""
    return build_state_maps(params_2nf, N=51, node="vp",
                            dt=1.0 / (512.0 * params_2nf.f_c))


@pytest.fixture(scope="session")
def energy_table():
    """Power table for the reference configuration, K=10^4 random symbols."""
    cfg = ExperimentConfig()
    t0 = time.perf_counter()
    table = run_energy_experiment(cfg)
    return SimpleNamespace(table=table, config=cfg,
                           seconds=time.perf_counter() - t0)


# =====================================================================
# High-precision mirror of the per-mode algebra
# =====================================================================

def mp_mode_algebra(params: CircuitParams, mode, dps: int = 50) -> dict:
    """Recompute one mode's coefficient chain with mpmath at ``dps`` digits.

    Starts from the exact binary values of the circuit constants and derives
    the mode's system matrices, forcing offsets, scalar-ODE coefficients,
    roots, harmonic gains, DC offset, and recovery row entirely in
    high-precision arithmetic.  Returns them as a dict of mpf/mpc values.
    """
    from mpmath import mp, mpc, mpf, pi, sqrt

    old = mp.dps
    mp.dps = dps
    try:
        d1_on = bool(int(mode) & 1)
        d2_on = bool(int(mode) & 2)
        R_on, R_off = mpf(params.R_on), mpf(params.R_off)
        R1 = R_on if d1_on else R_off
        R2 = R_on if d2_on else R_off
        V_on = mpf(params.V_on)
        offsets = {0: (mpf(0), mpf(0)),
                   1: (-V_on, -V_on),
                   2: (mpf(0), -V_on),
                   3: (-V_on, 2 * V_on)}
        u1c, u2c = offsets[int(mode)]
        R_s, R_L = mpf(params.R_s), mpf(params.R_L)
        C_p, C_n = mpf(params.C_p), mpf(params.C_n)

        m11 = (R_s + R1) * C_p
        m12 = R_s * C_n
        n11 = 1 + R1 / R_L
        n12 = -R1 / R_L
        m21 = R1 * C_p
        m22 = -R2 * C_n
        n21 = (R1 + R_L + R2) / R_L
        n22 = -n21
        w = 2 * pi * mpf(params.f_c)

        delta = m12 * n22 - n12 * m22
        k1 = m12 * (m11 * m22 - m12 * m21) / delta
        k2 = m12 * (m11 * n22 - m12 * n21 + n11 * m22 - n12 * m21) / delta
        k3 = m12 * (n11 * n22 - n12 * n21) / delta
        sq = sqrt(mpc(k2 * k2 - 4 * k1 * k3))
        r1 = (-k2 + sq) / (2 * k1)
        r2 = (-k2 - sq) / (2 * k1)

        alpha = m12 * m22 * w / delta
        beta = m12 * n22 / delta
        P = k3 - k1 * w * w
        Q = k2 * w
        den = P * P + Q * Q
        a = (P * alpha - Q * beta) / den
        b = (Q * alpha + P * beta) / den
        d = m12 * (n22 * u1c - n12 * u2c) / (delta * k3)

        h1 = (m22 * n11 - m12 * n21) / delta
        h2 = (m22 * m11 - m12 * m21) / delta
        h3 = -m22 / delta
        h4 = (m12 * u2c - m22 * u1c) / delta

        return dict(m11=m11, m12=m12, m21=m21, m22=m22,
                    n11=n11, n12=n12, n21=n21, n22=n22,
                    u1c=u1c, u2c=u2c, w=w, delta=delta,
                    k1=k1, k2=k2, k3=k3, r1=r1, r2=r2,
                    a=a, b=b, d=d, h1=h1, h2=h2, h3=h3, h4=h4)
    finally:
        mp.dps = old


def mp_closed_form_residuals(alg: dict, Vbar, t0, t, Vp0, Vpd0,
                             dps: int = 50):
    """Residuals of the coupled system rows under the assembled closed form.

    Matches (C1, C2) to (Vp0, Vpd0) at t0, evaluates V_p and the recovered
    V_n at time t, and substitutes both into the two system rows.  Returns
    (|residual row 1|, |residual row 2|, forcing scale), all mpmath values.
    Evaluates at ``dps`` digits regardless of the caller's mp state.
    """
    from mpmath import cos, exp, fabs, mp, sin

    old = mp.dps
    mp.dps = dps
    try:
        return _mp_residuals_body(alg, Vbar, t0, t, Vp0, Vpd0,
                                  cos, exp, fabs, sin)
    finally:
        mp.dps = old


def _mp_residuals_body(alg, Vbar, t0, t, Vp0, Vpd0, cos, exp, fabs, sin):
    w = alg["w"]
    p0 = Vbar * (alg["a"] * cos(w * t0) + alg["b"] * sin(w * t0)) + alg["d"]
    pd0 = Vbar * w * (alg["b"] * cos(w * t0) - alg["a"] * sin(w * t0))
    dv = Vp0 - p0
    dvd = Vpd0 - pd0
    C1 = (dvd - alg["r2"] * dv) / (alg["r1"] - alg["r2"])
    C2 = (alg["r1"] * dv - dvd) / (alg["r1"] - alg["r2"])

    tau = t - t0
    e1 = exp(alg["r1"] * tau)
    e2 = exp(alg["r2"] * tau)
    ct, st = cos(w * t), sin(w * t)
    Vp = C1 * e1 + C2 * e2 + Vbar * (alg["a"] * ct + alg["b"] * st) + alg["d"]
    Vpd = (C1 * alg["r1"] * e1 + C2 * alg["r2"] * e2
           + Vbar * w * (alg["b"] * ct - alg["a"] * st))
    Vpdd = (C1 * alg["r1"] ** 2 * e1 + C2 * alg["r2"] ** 2 * e2
            - Vbar * w ** 2 * (alg["a"] * ct + alg["b"] * st))
    Vs = Vbar * st
    Vsd = Vbar * w * ct
    Vn = alg["h1"] * Vp + alg["h2"] * Vpd + alg["h3"] * Vs + alg["h4"]
    Vnd = alg["h1"] * Vpd + alg["h2"] * Vpdd + alg["h3"] * Vsd

    res1 = (alg["m11"] * Vpd + alg["m12"] * Vnd
            + alg["n11"] * Vp + alg["n12"] * Vn - (Vs + alg["u1c"]))
    res2 = (alg["m21"] * Vpd + alg["m22"] * Vnd
            + alg["n21"] * Vp + alg["n22"] * Vn - alg["u2c"])
    scale = max(fabs(Vbar) + fabs(alg["u1c"]), fabs(alg["u2c"]))
    return fabs(res1), fabs(res2), scale
