"""Noise model and symbol detectors over the tabulated transition maps.

Three detectors share the end-of-symbol abstraction: a fixed midpoint
threshold (memoryless), decision-directed nearest-prediction detection that
tracks the channel state with two map evaluations per symbol, and blockwise
exhaustive sequence detection.  All of them consume plain sample arrays; the
noise is sample-domain additive white Gaussian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .circuit_core import CircuitParams
from .statemap import OutOfDomainError, StateMap

__all__ = [
    "DetectionResult",
    "add_noise",
    "snr_to_sigma",
    "ml_threshold_detect",
    "caad_detect",
    "mlsd_detect",
    "pilot_init",
    "bit_errors",
    "PILOT_BIT",
    "PILOT_LEN",
]

# Shared transmitter/receiver convention for the state-settling preamble.
PILOT_BIT = 1
PILOT_LEN = 8

MLSD_MAX_L = 20


@dataclass
class DetectionResult:
    """Decoded bits plus accounting.

    ``state_estimates`` carries the per-symbol tracked state for the
    decision-directed detector and is None otherwise.  ``metric_evals``
    counts model evaluations: two per symbol for the adaptive detector, one
    per candidate trajectory for sequence detection, zero for thresholding.
    """

    bits: np.ndarray
    state_estimates: np.ndarray | None
    metric_evals: int


def _as_samples(y) -> np.ndarray:
    arr = np.ascontiguousarray(y, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("observations must form a 1-D sequence")
    return arr


def add_noise(x, sigma: float, seed) -> np.ndarray:
    """Additive i.i.d. zero-mean Gaussian noise, deterministic given seed.

    ``seed`` may be anything ``np.random.default_rng`` accepts, including an
    existing Generator (consumed in place).
    """
    xs = _as_samples(x)
    if sigma < 0.0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0.0:
        return xs.copy()
    rng = seed if isinstance(seed, np.random.Generator) \
        else np.random.default_rng(seed)
    return xs + rng.normal(0.0, sigma, size=xs.shape)


def snr_to_sigma(ebn0_db: float, params: CircuitParams) -> float:
    """Noise standard deviation for a target per-bit SNR.

    The average symbol power of the equiprobable binary alphabet is
    (A_L^2 + A_H^2)/2 and Eb/N0 = P_av / (2 sigma^2).
    """
    p_av = 0.5 * (params.A_L ** 2 + params.A_H ** 2)
    return math.sqrt(p_av / (2.0 * 10.0 ** (ebn0_db / 10.0)))


def ml_threshold_detect(y, smap: StateMap) -> DetectionResult:
    """Memoryless midpoint thresholding against (v_H + v_L) / 2.

    Works on whichever node's samples the map was built for.  An observation
    exactly on the threshold decodes as 0.
    """
    ys = _as_samples(y)
    rho = 0.5 * (smap.v_H + smap.v_L)
    return DetectionResult(bits=(ys > rho).astype(np.int8),
                           state_estimates=None, metric_evals=0)


def _check_initial_state(smap: StateMap, x0: float) -> float:
    eps = 0.01 * smap.swing
    if x0 < smap.v_L - eps or x0 > smap.v_H + eps:
        raise OutOfDomainError(
            f"initial state {x0:.6g} V outside the map domain")
    return float(x0)


def caad_detect(y, smap: StateMap, x0_hat: float) -> DetectionResult:
    """Decision-directed detection with tracked channel state.

    Per symbol: both branch predictions are evaluated from the current state
    estimate, the nearer one to the observation decides the bit, and the
    estimate follows the chosen branch (clamped to the invariant interval).
    Exactly two map evaluations and one comparison per symbol; distance ties
    decode as 0.
    """
    ys = _as_samples(y)
    x0 = _check_initial_state(smap, x0_hat)
    if ys.shape[0] == 0:
        return DetectionResult(bits=np.empty(0, dtype=np.int8),
                               state_estimates=np.empty(0), metric_evals=0)
    v0, inv_step = smap._lookup_args()
    bits, xh = _kernels.caad_run(ys, v0, inv_step, smap.mu_L, smap.mu_H,
                                 smap.v_L, smap.v_H, x0)
    return DetectionResult(bits=bits, state_estimates=xh,
                           metric_evals=2 * ys.shape[0])


def mlsd_detect(y, smap: StateMap, L: int, x0: float) -> DetectionResult:
    """Blockwise exhaustive sequence detection with decision feedback.

    The observation stream is cut into length-L blocks; within a block all
    2^L candidate bit patterns are expanded through the maps from the running
    state estimate and the pattern with the smallest squared-error sum wins.
    The winner's terminal state seeds the next block; a final partial block
    of length L' enumerates 2^{L'} patterns.  Metric ties resolve to the
    lowest pattern index (zeros preferred in leading positions).
    """
    ys = _as_samples(y)
    if not 1 <= L <= MLSD_MAX_L:
        raise ValueError(f"memory length must satisfy 1 <= L <= {MLSD_MAX_L}")
    x = _check_initial_state(smap, x0)
    K = ys.shape[0]
    bits = np.empty(K, dtype=np.int8)
    evals = 0
    v0, inv_step = smap._lookup_args()
    pos = 0
    while pos < K:
        Lblk = min(L, K - pos)
        best, x = _kernels.mlsd_block(ys[pos:pos + Lblk], v0, inv_step,
                                      smap.mu_L, smap.mu_H, x, Lblk)
        for j in range(Lblk):
            bits[pos + j] = (best >> (Lblk - 1 - j)) & 1
        evals += 1 << Lblk
        pos += Lblk
    return DetectionResult(bits=bits, state_estimates=None,
                           metric_evals=evals)


def pilot_init(pilot_len: int = PILOT_LEN, pilot_bit: int = PILOT_BIT,
               smap: StateMap = None) -> float:
    """State reached by a known settling preamble.

    Iterates the pilot bit's branch map ``pilot_len`` times starting from the
    domain midpoint; both ends of the link share this convention, so the
    receiver can seed its state estimate without feedback.
    """
    if smap is None:
        raise ValueError("a StateMap is required")
    if not isinstance(pilot_len, (int, np.integer)) or pilot_len < 1:
        raise ValueError("pilot_len must be a positive integer")
    if pilot_bit not in (0, 1):
        raise ValueError("pilot_bit must be 0 or 1")
    vals = smap.mu_H if pilot_bit == 1 else smap.mu_L
    v0, inv_step = smap._lookup_args()
    x = 0.5 * (smap.v_L + smap.v_H)
    for _ in range(pilot_len):
        x = float(_kernels._lookup.py_func(v0, inv_step, vals, x))
    return x


def bit_errors(decoded, reference) -> int:
    """Hamming distance between two equal-length binary sequences."""
    a = np.asarray(decoded)
    b = np.asarray(reference)
    if a.shape != b.shape:
        raise ValueError("sequences differ in length")
    return int(np.count_nonzero(a != b))
