"""Harvested-power metrics over end-of-symbol samples.

The headline figure is the sampled average: instantaneous power v^2/R_L at
each symbol-rate sampling instant, averaged over the stream.  A continuous
time-weighted average over a dense trace is also provided, strictly as a
diagnostic; reported tables use the sampled definition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "EnergyReport",
    "EmptyInputError",
    "harvested_power_avg",
    "time_averaged_power",
]

_NODES = ("vl", "vp")


class EmptyInputError(ValueError):
    """No samples were supplied."""


@dataclass(frozen=True)
class EnergyReport:
    """Average and per-symbol harvested power at one observation node."""

    P_bar: float
    node: str
    K: int
    per_symbol: np.ndarray


def harvested_power_avg(samples, R_L: float, node: str = "vl") -> EnergyReport:
    """Average sampled power P_bar = (1/K) sum_k v^2(k T_s) / R_L."""
    if R_L <= 0.0:
        raise ValueError("R_L must be strictly positive")
    if node not in _NODES:
        raise ValueError(f"node must be one of {_NODES}")
    v = np.ascontiguousarray(samples, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] == 0:
        raise EmptyInputError("at least one voltage sample is required")
    per_symbol = v * v / R_L
    return EnergyReport(P_bar=float(np.mean(per_symbol)), node=node,
                        K=v.shape[0], per_symbol=per_symbol)


def time_averaged_power(voltages, times, R_L: float) -> float:
    """Trapezoidal time average of v(t)^2 / R_L over a dense trace.

    Diagnostic only: reported figures use the sampled average of
    ``harvested_power_avg``, which weighs symbol-rate instants equally
    instead of integrating the waveform.
    """
    if R_L <= 0.0:
        raise ValueError("R_L must be strictly positive")
    v = np.ascontiguousarray(voltages, dtype=np.float64)
    t = np.ascontiguousarray(times, dtype=np.float64)
    if v.shape != t.shape or v.ndim != 1 or v.shape[0] < 2:
        raise ValueError("need matching 1-D traces with at least two points")
    if not np.all(np.diff(t) > 0.0):
        raise ValueError("times must be strictly increasing")
    return float(np.trapezoid(v * v / R_L, t) / (t[-1] - t[0]))
