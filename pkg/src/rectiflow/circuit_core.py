"""Circuit parameters, diode law, conduction modes, and per-mode propagation algebra.

The receiver is a source V_s(t) = A sin(2*pi*f_c*t) behind R_s feeding two
anti-parallel diode branches: D1 charges node V_p upward, D2 pulls node V_n
downward, with filter capacitors C_p, C_n to ground and the load R_L connected
differentially between V_p and V_n.  Each diode is piecewise linear (R_on above
the turn-on voltage, R_off below), so at any instant the circuit is one of four
linear systems selected by the two diode states.  This module derives, for each
of the four modes, the coupled first-order system

    M vdot + N v = u(t),      v = (V_p, V_n),

its scalar second-order reduction in V_p, the characteristic roots, the
sinusoidal particular solution, and the back-substitution row that recovers V_n
from (V_p, Vdot_p, V_s).  Everything downstream (transient stepping, state maps,
detection) is built from these coefficients.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace
from enum import IntEnum
from functools import lru_cache
from pathlib import Path

import numpy as np

__all__ = [
    "CircuitParams",
    "ConductionMode",
    "ModeCoefficients",
    "DegenerateModeError",
    "RepeatedRootsError",
    "load_params",
    "diode_current",
    "classify_mode",
    "mode_coefficients",
    "continuity_constants",
    "continuity_constants_confluent",
    "internal_node_voltage",
    "diode_voltages",
    "time_constant",
]


class DegenerateModeError(ValueError):
    """Raised when a mode's elimination algebra collapses (singular system)."""


class RepeatedRootsError(ValueError):
    """Raised when the characteristic roots are too close for the generic
    two-exponential form; callers switch to the confluent solution."""


# =====================================================================
# Parameters
# =====================================================================

# Reference operating point used throughout the test-suite and as CLI defaults.
_DEFAULTS = {
    "f_c": 800e6,
    "R_s": 50.0,
    "R_L": 1e3,
    "C_p": 2e-9,
    "C_n": 2e-9,
    "V_on": 0.25,
    "R_on": 5.0,
    "R_off": 1e7,
    "A_L": 0.5,
    "A_H": 1.0,
    "T_s": 4e-6,
}

_CONFIG_KEYS = tuple(_DEFAULTS)


@dataclass(frozen=True)
class CircuitParams:
    """Electrical constants of the rectifier front-end and the BASK source.

    All values are SI base units (V, A, s, Ohm, F, Hz).  ``A_min`` is the
    smallest amplitude the modulation may use; it defaults to ``A_L``.
    Instances are immutable and validated on construction.
    """

    f_c: float = _DEFAULTS["f_c"]
    R_s: float = _DEFAULTS["R_s"]
    R_L: float = _DEFAULTS["R_L"]
    C_p: float = _DEFAULTS["C_p"]
    C_n: float = _DEFAULTS["C_n"]
    V_on: float = _DEFAULTS["V_on"]
    R_on: float = _DEFAULTS["R_on"]
    R_off: float = _DEFAULTS["R_off"]
    A_L: float = _DEFAULTS["A_L"]
    A_H: float = _DEFAULTS["A_H"]
    T_s: float = _DEFAULTS["T_s"]
    A_min: float | None = None

    def __post_init__(self):
        if self.A_min is None:
            object.__setattr__(self, "A_min", self.A_L)
        for name in ("f_c", "R_s", "R_L", "C_p", "C_n", "V_on", "R_on",
                     "R_off", "T_s"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be strictly positive")
        if self.R_off / self.R_on < 1e3:
            raise ValueError("R_off must dominate R_on (R_off/R_on >= 1e3)")
        # equality of the two amplitudes is allowed: it degenerates the
        # alphabet but every downstream computation stays well defined
        if not (self.A_H >= self.A_L >= self.A_min > 0.0):
            raise ValueError("amplitudes must satisfy A_H >= A_L >= A_min > 0")

    def with_capacitance(self, C: float) -> "CircuitParams":
        """Copy with both filter capacitors set to ``C``."""
        return replace(self, C_p=C, C_n=C)


def load_params(path: str | Path) -> CircuitParams:
    """Read a plain-text ``key=value`` configuration file.

    Recognized keys are exactly the electrical constants (f_c, R_s, R_L, C_p,
    C_n, V_on, R_on, R_off, A_L, A_H, T_s), one per line, SI units.  Blank
    lines and ``#`` comments are ignored; missing keys fall back to the
    reference defaults.
    """
    values = dict(_DEFAULTS)
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = float(val.strip())
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: bad number for {key!r}") from exc
    return CircuitParams(**values)


# =====================================================================
# Modes and the diode law
# =====================================================================

class ConductionMode(IntEnum):
    """Diode-state combination: bit 0 set when D1 conducts, bit 1 when D2 does."""

    RR = 0   # both reverse
    FR = 1   # D1 forward, D2 reverse
    RF = 2   # D1 reverse, D2 forward
    FF = 3   # both forward

    @property
    def d1_on(self) -> bool:
        return bool(self.value & 1)

    @property
    def d2_on(self) -> bool:
        return bool(self.value & 2)


def diode_current(V_D, params: CircuitParams):
    """Piecewise-linear diode current for terminal voltage ``V_D``.

    (V_D - V_on)/R_on at or above threshold, V_D/R_off below.  The law is
    intentionally discontinuous at V_D = V_on (jump V_on/R_off); it must not
    be smoothed, since the mode machinery depends on the exact branch point.
    Accepts scalars or numpy arrays.
    """
    V_D = np.asarray(V_D, dtype=float)
    out = np.where(V_D >= params.V_on,
                   (V_D - params.V_on) / params.R_on,
                   V_D / params.R_off)
    return float(out) if out.ndim == 0 else out


def classify_mode(V_D1: float, V_D2: float, V_on: float) -> ConductionMode:
    """Return the unique conduction mode whose guard holds.

    D1 conducts iff V_D1 >= V_on, D2 iff V_D2 >= V_on; the four combinations
    partition the (V_D1, V_D2) plane.
    """
    return ConductionMode((1 if V_D1 >= V_on else 0) | (2 if V_D2 >= V_on else 0))


def _branch_resistances(params: CircuitParams, mode: ConductionMode):
    R1 = params.R_on if mode.d1_on else params.R_off
    R2 = params.R_on if mode.d2_on else params.R_off
    return R1, R2


def _forcing_offsets(params: CircuitParams, mode: ConductionMode):
    # Constant forcing terms added to (V_s, 0) in the two system rows.  They
    # carry the turn-on EMF of whichever diodes conduct in the mode.
    V_on = params.V_on
    if mode is ConductionMode.RR:
        return 0.0, 0.0
    if mode is ConductionMode.FR:
        return -V_on, -V_on
    if mode is ConductionMode.RF:
        return 0.0, -V_on
    return -V_on, 2.0 * V_on


def internal_node_voltage(V_s: float, V_p: float, V_n: float,
                          params: CircuitParams, mode: ConductionMode) -> float:
    """Voltage of the node between R_s and the diode pair.

    Solves the instantaneous nodal balance at the input node given the
    capacitor voltages (V_p, V_n) and the mode's branch resistances; a
    conducting branch contributes its turn-on EMF.  The derivation lives in
    docs/circuit_model.md.
    """
    R1, R2 = _branch_resistances(params, mode)
    g1, g2 = 1.0 / R1, 1.0 / R2
    s1 = 1.0 if mode.d1_on else 0.0
    s2 = 1.0 if mode.d2_on else 0.0
    num = (V_s / params.R_s
           + (V_p + s1 * params.V_on) * g1
           + (V_n - s2 * params.V_on) * g2)
    return num / (1.0 / params.R_s + g1 + g2)


def diode_voltages(V_s: float, V_p: float, V_n: float,
                   params: CircuitParams, mode: ConductionMode):
    """Terminal voltages (V_D1, V_D2) seen by the two diodes."""
    V_in = internal_node_voltage(V_s, V_p, V_n, params, mode)
    return V_in - V_p, V_n - V_in


# =====================================================================
# Per-mode closed-form algebra
# =====================================================================

@dataclass(frozen=True)
class ModeCoefficients:
    """Derived propagation algebra of one conduction mode.

    The coupled system is  M vdot + N v = u(t)  with v = (V_p, V_n),
    u = (V_s + u1_const, u2_const).  Eliminating V_n gives the scalar ODE
    k1*Vpdd + k2*Vpd + k3*Vp = g(t) with roots r1, r2; the sinusoidal
    particular solution is Vbar*(a*cos(w t) + b*sin(w t)) + d; and V_n is
    recovered exactly from V_n = h1*V_p + h2*Vpd + h3*V_s + h4.
    """

    mode: ConductionMode
    omega: float
    branch_R1: float
    branch_R2: float
    u1_const: float
    u2_const: float
    m11: float
    m12: float
    m21: float
    m22: float
    n11: float
    n12: float
    n21: float
    n22: float
    delta: float
    k1: float
    k2: float
    k3: float
    r1: complex
    r2: complex
    a: float
    b: float
    d: float
    h1: float
    h2: float
    h3: float
    h4: float

    @property
    def roots_are_close(self) -> bool:
        scale = max(abs(self.r1), abs(self.r2))
        return abs(self.r1 - self.r2) < 1e-6 * scale


def _eliminate(mode: ConductionMode, R1: float, R2: float,
               u1_const: float, u2_const: float,
               m11: float, m12: float, m21: float, m22: float,
               n11: float, n12: float, n21: float, n22: float,
               omega: float) -> ModeCoefficients:
    """Full reduction chain from the 2x2 system to scalar closed-form pieces."""
    delta = m12 * n22 - n12 * m22
    if delta == 0.0:
        raise DegenerateModeError(f"elimination determinant vanishes in mode {mode.name}")

    k1 = m12 * (m11 * m22 - m12 * m21) / delta
    k2 = m12 * (m11 * n22 - m12 * n21 + n11 * m22 - n12 * m21) / delta
    k3 = m12 * (n11 * n22 - n12 * n21) / delta
    if k1 == 0.0:
        raise DegenerateModeError(f"rate matrix singular in mode {mode.name}")

    disc = k2 * k2 - 4.0 * k1 * k3
    sq = cmath.sqrt(complex(disc))
    r1 = (-k2 + sq) / (2.0 * k1)
    r2 = (-k2 - sq) / (2.0 * k1)

    # Forcing of the scalar ODE for V_s = Vbar*sin(w t):
    #   g(t) = (m12/delta) * (n22*u1 - n12*u2 + m22*du1 - m12*du2)
    # whose sinusoidal part per unit Vbar is alpha*cos + beta*sin.
    alpha = m12 * m22 * omega / delta
    beta = m12 * n22 / delta
    P = k3 - k1 * omega * omega
    Q = k2 * omega
    den = P * P + Q * Q
    a = (P * alpha - Q * beta) / den
    b = (Q * alpha + P * beta) / den

    # DC component: V_p entry of the fixed point of N v = u0.
    d = m12 * (n22 * u1_const - n12 * u2_const) / (delta * k3)

    h1 = (m22 * n11 - m12 * n21) / delta
    h2 = (m22 * m11 - m12 * m21) / delta
    h3 = -m22 / delta
    h4 = (m12 * u2_const - m22 * u1_const) / delta

    return ModeCoefficients(
        mode=mode, omega=omega, branch_R1=R1, branch_R2=R2,
        u1_const=u1_const, u2_const=u2_const,
        m11=m11, m12=m12, m21=m21, m22=m22,
        n11=n11, n12=n12, n21=n21, n22=n22,
        delta=delta, k1=k1, k2=k2, k3=k3, r1=r1, r2=r2,
        a=a, b=b, d=d, h1=h1, h2=h2, h3=h3, h4=h4,
    )


@lru_cache(maxsize=64)
def mode_coefficients(params: CircuitParams, mode: ConductionMode) -> ModeCoefficients:
    """Assemble the complete closed-form algebra for one mode.

    Builds the mode's M, N matrices and forcing offsets from the circuit
    topology, then runs the elimination chain.  Results are cached per
    (params, mode) and immutable, so they are safe to share across workers.

    Raises
    ------
    DegenerateModeError
        If the elimination determinant or the rate matrix is singular, which
        signals unphysical parameters (cannot happen for valid CircuitParams).
    """
    R1, R2 = _branch_resistances(params, mode)
    u1c, u2c = _forcing_offsets(params, mode)

    m11 = (params.R_s + R1) * params.C_p
    m12 = params.R_s * params.C_n
    n11 = 1.0 + R1 / params.R_L
    n12 = -R1 / params.R_L
    m21 = R1 * params.C_p
    m22 = -R2 * params.C_n
    n21 = (R1 + params.R_L + R2) / params.R_L
    n22 = -n21

    omega = 2.0 * math.pi * params.f_c
    return _eliminate(mode, R1, R2, u1c, u2c,
                      m11, m12, m21, m22, n11, n12, n21, n22, omega)


def _particular(coeffs: ModeCoefficients, V_s_amplitude: float,
                omega: float, t: float):
    """Particular solution value and slope at absolute time t."""
    c = math.cos(omega * t)
    s = math.sin(omega * t)
    p = V_s_amplitude * (coeffs.a * c + coeffs.b * s) + coeffs.d
    pd = V_s_amplitude * omega * (coeffs.b * c - coeffs.a * s)
    return p, pd


def continuity_constants(V_p0: float, V_p0_dot: float, t0: float,
                         coeffs: ModeCoefficients, V_s_amplitude: float):
    """Transient constants (C1, C2) matching value and slope at mode entry.

    ``V_p0`` is the capacitor voltage carried across the switch and
    ``V_p0_dot`` the slope of the incoming segment at t0, so that

        V_p(t) = Re[C1 e^{r1 (t-t0)} + C2 e^{r2 (t-t0)}] + p(t)

    satisfies V_p(t0) = V_p0 and dV_p/dt(t0+) = V_p0_dot.  Constants are
    returned as complex numbers; for complex-conjugate roots they are
    conjugates of each other and the reconstruction stays real.

    Raises
    ------
    RepeatedRootsError
        If |r1 - r2| < 1e-6 * max(|r1|, |r2|); use
        :func:`continuity_constants_confluent` instead.
    """
    r1, r2 = coeffs.r1, coeffs.r2
    if abs(r1 - r2) < 1e-6 * max(abs(r1), abs(r2)):
        raise RepeatedRootsError("characteristic roots nearly coincide")
    p, pd = _particular(coeffs, V_s_amplitude, coeffs.omega, t0)
    dv = V_p0 - p
    dvd = V_p0_dot - pd
    C1 = (dvd - r2 * dv) / (r1 - r2)
    C2 = (r1 * dv - dvd) / (r1 - r2)
    return C1, C2


def continuity_constants_confluent(V_p0: float, V_p0_dot: float, t0: float,
                                   coeffs: ModeCoefficients, V_s_amplitude: float):
    """Matching constants for the confluent form (C1 + C2 (t-t0)) e^{r (t-t0)}.

    Used when the roots are numerically repeated; r is their mean.
    """
    r = 0.5 * (coeffs.r1 + coeffs.r2)
    p, pd = _particular(coeffs, V_s_amplitude, coeffs.omega, t0)
    C1 = complex(V_p0 - p)
    C2 = (V_p0_dot - pd) - r * (V_p0 - p)
    return C1, C2


def time_constant(params: CircuitParams, mode: ConductionMode = ConductionMode.RR) -> float:
    """Diagnostic relaxation scale 1/|Re(r_slow)| of the given mode.

    This is a proxy figure: the receiver has no single exact time constant
    because the active mode keeps changing; the slow root of the chosen mode
    (both diodes blocking by default) is the natural decay-rate summary.
    """
    c = mode_coefficients(params, mode)
    r_slow = c.r1 if abs(c.r1.real) < abs(c.r2.real) else c.r2
    if r_slow.real == 0.0:
        raise DegenerateModeError("mode has an undamped root; no finite time constant")
    return 1.0 / abs(r_slow.real)
