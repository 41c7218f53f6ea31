"""Monte Carlo experiment driver: BER sweeps, power tables, trace emission.

BER sweeps run at the symbol level on the tabulated transition maps; a
cross-validation guard compares the fast path against the full transient
simulator before any sweep and aborts on disagreement.  Every (capacitance,
detector, SNR) cell draws from its own RNG stream derived from the master
seed and the cell indices, so results are independent of execution order.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .circuit_core import CircuitParams, _CONFIG_KEYS
from .detectors import (
    PILOT_BIT,
    PILOT_LEN,
    add_noise,
    bit_errors,
    caad_detect,
    ml_threshold_detect,
    mlsd_detect,
    pilot_init,
    snr_to_sigma,
)
from .energy import EnergyReport, harvested_power_avg
from .statemap import (
    StateMap,
    _settle,
    build_state_maps,
    symbol_channel_simulate,
)
from .transient import TransientState, simulate

__all__ = [
    "ExperimentConfig",
    "BerPoint",
    "BerCurve",
    "FastPathError",
    "wilson_interval",
    "run_ber_experiment",
    "run_energy_experiment",
    "run_symbol_trace",
    "emit_outputs",
    "DETECTOR_NAMES",
    "TRACE_BITS",
]

DETECTOR_NAMES = ("ml_vp", "ml_vl", "caad", "mlsd")

# 15-bit illustration stream used for the transient trace figure.
TRACE_BITS = "101100111000101"

# Fast-path cross-validation: relative RMS bound and probe length.
GUARD_RMS_REL = 1e-3
GUARD_SYMBOLS = 64

# Power averages tolerate ~1e-3 relative sample error, far looser than the
# default simulation grid delivers, so energy sweeps run coarser for speed.
ENERGY_STEPS_PER_CYCLE = 128


class FastPathError(RuntimeError):
    """Symbol-level fast path disagrees with the transient simulator."""


def wilson_interval(errors: int, n: int, z: float = 1.959964) -> tuple:
    """Wilson score interval for a binomial proportion."""
    if errors < 0 or n < 0 or errors > n:
        raise ValueError("need 0 <= errors <= n")
    if n == 0:
        return 0.0, 1.0
    p = errors / n
    z2n = z * z / n
    center = (p + 0.5 * z2n) / (1.0 + z2n)
    half = z * math.sqrt(p * (1.0 - p) / n + 0.25 * z2n / n) / (1.0 + z2n)
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated description of one experiment campaign."""

    circuit: CircuitParams = field(default_factory=CircuitParams)
    capacitance_list: tuple = (2e-9, 10e-9)
    ebn0_grid: tuple = tuple(float(v) for v in range(0, 21, 2))
    detectors: tuple = DETECTOR_NAMES
    mlsd_L: int = 10
    symbols_per_trial: int = 10_000
    min_errors: int = 100
    max_symbols: int = 10_000_000
    seed: int = 1234

    def __post_init__(self):
        object.__setattr__(self, "capacitance_list",
                           tuple(float(c) for c in self.capacitance_list))
        object.__setattr__(self, "ebn0_grid",
                           tuple(float(e) for e in self.ebn0_grid))
        object.__setattr__(self, "detectors", tuple(self.detectors))
        if not self.capacitance_list:
            raise ValueError("capacitance_list must not be empty")
        if any(c <= 0.0 for c in self.capacitance_list):
            raise ValueError("capacitances must be strictly positive")
        if any(not math.isfinite(e) for e in self.ebn0_grid):
            raise ValueError("ebn0_grid must be finite")
        for det in self.detectors:
            if det not in DETECTOR_NAMES:
                raise ValueError(f"unknown detector '{det}'")
        if len(set(self.detectors)) != len(self.detectors):
            raise ValueError("duplicate detector")
        if not 1 <= self.mlsd_L <= 20:
            raise ValueError("mlsd_L must lie in [1, 20]")
        if self.symbols_per_trial < 1:
            raise ValueError("symbols_per_trial must be >= 1")
        if self.min_errors < 50:
            raise ValueError("min_errors below the statistical floor of 50")
        if self.max_symbols < 1:
            raise ValueError("max_symbols must be >= 1")

    def fingerprint(self) -> str:
        parts = [f"{k}={getattr(self.circuit, k):.17g}" for k in _CONFIG_KEYS]
        parts.append("caps=" + ",".join(f"{c:.17g}"
                                        for c in self.capacitance_list))
        parts.append("ebn0=" + ",".join(f"{e:.17g}" for e in self.ebn0_grid))
        parts.append("det=" + ",".join(self.detectors))
        parts.append(f"L={self.mlsd_L}|K={self.symbols_per_trial}"
                     f"|minerr={self.min_errors}|cap={self.max_symbols}"
                     f"|seed={self.seed}")
        return hashlib.sha256("|".join(parts).encode()).hexdigest()[:16]


@dataclass
class BerPoint:
    """One measured point of a BER curve."""

    ebn0_db: float
    errors: int
    symbols: int
    budget_exhausted: bool = False

    @property
    def ber(self) -> float:
        return self.errors / self.symbols if self.symbols else float("nan")

    def wilson(self, z: float = 1.959964) -> tuple:
        return wilson_interval(self.errors, self.symbols, z)


@dataclass
class BerCurve:
    """BER-vs-SNR points for one detector at one capacitance."""

    detector: str
    capacitance: float
    node: str
    points: list
    metadata: str


# =====================================================================
# Fast-path guard
# =====================================================================

def _phase_zero(state: TransientState) -> TransientState:
    return TransientState(t=0.0, V_p=state.V_p, V_p_dot=state.V_p_dot,
                          V_n=state.V_n, mode=state.mode)


def _fast_path_check(params: CircuitParams, smap: StateMap, seed: int) -> float:
    """Compare the map iteration against a warm transient run; returns RMS."""
    _, settled, _ = _settle(params, params.A_L, smap.node, None)
    rng = np.random.default_rng([seed, 0xFA57])
    bits = rng.integers(0, 2, size=GUARD_SYMBOLS).astype(np.int8)
    amps = np.where(bits == 1, params.A_H, params.A_L)
    traj = simulate(amps, params, init=_phase_zero(settled),
                    store_every=0, store_events=False)
    true_xs = traj.end_V_L if smap.node == "vl" else traj.end_V_p
    fast_xs = symbol_channel_simulate(bits, smap, smap.v_L)
    rms = float(np.sqrt(np.mean((fast_xs - true_xs) ** 2)))
    if rms >= GUARD_RMS_REL * smap.swing:
        raise FastPathError(
            f"fast-path RMS {rms:.3e} V exceeds "
            f"{GUARD_RMS_REL:g} x swing ({smap.swing:.3e} V) "
            f"for node {smap.node}")
    return rms


def _needed_nodes(detectors) -> tuple:
    nodes = []
    if any(d in ("ml_vl", "caad", "mlsd") for d in detectors):
        nodes.append("vl")
    if "ml_vp" in detectors:
        nodes.append("vp")
    return tuple(nodes)


def _prepare_maps(cfg: ExperimentConfig, maps, run_guard: bool) -> dict:
    """Build or validate one StateMap per (capacitance, node) in use."""
    out = {}
    for ci, cap in enumerate(cfg.capacitance_list):
        params_c = cfg.circuit.with_capacitance(cap)
        for node in _needed_nodes(cfg.detectors):
            key = (cap, node)
            smap = None if maps is None else maps.get(key)
            if smap is None:
                smap = build_state_maps(params_c, node=node)
            elif not smap.matches(params_c):
                raise ValueError(
                    f"supplied map for C={cap:g} F node={node} was built "
                    "for different circuit constants")
            if run_guard:
                _fast_path_check(params_c, smap, cfg.seed + ci)
            out[key] = smap
    return out


# =====================================================================
# Experiments
# =====================================================================

def _detect(det: str, y: np.ndarray, smap: StateMap, x0: float, L: int):
    if det in ("ml_vl", "ml_vp"):
        return ml_threshold_detect(y, smap)
    if det == "caad":
        return caad_detect(y, smap, x0)
    if det == "mlsd":
        return mlsd_detect(y, smap, L, x0)
    raise ValueError(f"unknown detector '{det}'")


def run_ber_experiment(cfg: ExperimentConfig, maps: dict | None = None,
                       run_guard: bool = True) -> list:
    """Monte Carlo BER sweep over (capacitance, detector, Eb/N0).

    Each cell accumulates trials of ``symbols_per_trial`` symbols until
    ``min_errors`` bit errors are seen or ``max_symbols`` symbols are spent;
    points that hit the budget first are flagged, not dropped.  Pre-built
    maps may be passed as {(capacitance, node): StateMap}; they are bound to
    the circuit constants and refused on mismatch.
    """
    prepared = _prepare_maps(cfg, maps, run_guard)
    curves = []
    meta = cfg.fingerprint()
    for ci, cap in enumerate(cfg.capacitance_list):
        for di, det in enumerate(cfg.detectors):
            node = "vp" if det == "ml_vp" else "vl"
            smap = prepared[(cap, node)]
            x0 = pilot_init(PILOT_LEN, PILOT_BIT, smap)
            points = []
            for si, ebn0 in enumerate(cfg.ebn0_grid):
                params_c = cfg.circuit.with_capacitance(cap)
                sigma = snr_to_sigma(ebn0, params_c)
                rng = np.random.default_rng([cfg.seed, ci, di, si])
                errors = 0
                symbols = 0
                while errors < cfg.min_errors and symbols < cfg.max_symbols:
                    K = min(cfg.symbols_per_trial,
                            cfg.max_symbols - symbols)
                    bits = rng.integers(0, 2, size=K).astype(np.int8)
                    xs = symbol_channel_simulate(bits, smap, x0)
                    y = add_noise(xs, sigma, rng)
                    res = _detect(det, y, smap, x0, cfg.mlsd_L)
                    errors += bit_errors(res.bits, bits)
                    symbols += K
                points.append(BerPoint(
                    ebn0_db=ebn0, errors=errors, symbols=symbols,
                    budget_exhausted=errors < cfg.min_errors))
            curves.append(BerCurve(detector=det, capacitance=cap,
                                   node=node, points=points, metadata=meta))
    return curves


def run_energy_experiment(cfg: ExperimentConfig,
                          dt: float | None = None) -> dict:
    """Average harvested power via full transient simulation.

    One random equiprobable stream of ``symbols_per_trial`` bits (fixed by
    the master seed, shared across capacitances) is simulated per
    capacitance; both observation nodes are read from the same run.  Returns
    {(capacitance, node): EnergyReport}.
    """
    rng = np.random.default_rng([cfg.seed, 0xE6])
    bits = rng.integers(0, 2, size=cfg.symbols_per_trial)
    table = {}
    for cap in cfg.capacitance_list:
        params_c = cfg.circuit.with_capacitance(cap)
        if dt is None:
            dt_c = 1.0 / (ENERGY_STEPS_PER_CYCLE * params_c.f_c)
        else:
            dt_c = dt
        amps = np.where(bits == 1, params_c.A_H, params_c.A_L)
        traj = simulate(amps, params_c, dt=dt_c, store_every=0,
                        store_events=False)
        table[(cap, "vl")] = harvested_power_avg(traj.end_V_L,
                                                 params_c.R_L, node="vl")
        table[(cap, "vp")] = harvested_power_avg(traj.end_V_p,
                                                 params_c.R_L, node="vp")
    return table


def run_symbol_trace(params: CircuitParams, bits: str = TRACE_BITS,
                     dt: float | None = None):
    """Dense transient trace of a short illustrative bit stream.

    Returns (bit array, Trajectory) with the dense trace decimated to one
    sample per carrier cycle and per-symbol end samples attached.
    """
    barr = np.array([int(c) for c in bits], dtype=np.int8)
    if barr.size == 0 or np.any((barr != 0) & (barr != 1)):
        raise ValueError("bits must be a non-empty string of 0/1")
    amps = np.where(barr == 1, params.A_H, params.A_L)
    from .transient import DEFAULT_STEPS_PER_CYCLE
    spc = DEFAULT_STEPS_PER_CYCLE if dt is None else \
        max(1, int(round(1.0 / (dt * params.f_c))))
    traj = simulate(amps, params, dt=dt, store_every=spc, store_events=False)
    return barr, traj


# =====================================================================
# Output emission
# =====================================================================

def _cap_tag(cap: float) -> str:
    return f"{cap * 1e9:g}n"


def _write(path: Path, text: str, written: list) -> None:
    path.write_text(text)
    written.append(path)


def emit_outputs(results: dict, outdir, fmt: str = "csv") -> list:
    """Write experiment results as CSV files plus a figure manifest.

    ``results`` may hold any of: 'ber' (list of BerCurve), 'energy'
    ({(capacitance, node): EnergyReport}), 'traces'
    ({capacitance: (bits, Trajectory)}), 'config' (ExperimentConfig).
    Outputs are deterministic: same results give byte-identical files.
    """
    if fmt != "csv":
        raise ValueError("only csv output is supported")
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    manifest = {"figures": {}}

    meta = ""
    if results.get("config") is not None:
        meta = results["config"].fingerprint()

    ber_files = {}
    for curve in results.get("ber", []):
        tag = _cap_tag(curve.capacitance)
        name = f"ber_C{tag}_{curve.detector}.csv"
        lines = [f"# ber curve detector={curve.detector} "
                 f"capacitance={curve.capacitance:.17g} node={curve.node}",
                 f"# config={curve.metadata}",
                 "ebn0_db,ber,errors,symbols,budget_exhausted,"
                 "wilson_lo,wilson_hi"]
        for pt in curve.points:
            lo, hi = pt.wilson()
            lines.append(f"{pt.ebn0_db:.17g},{pt.ber:.17g},{pt.errors},"
                         f"{pt.symbols},{int(pt.budget_exhausted)},"
                         f"{lo:.17g},{hi:.17g}")
        _write(out / name, "\n".join(lines) + "\n", written)
        ber_files.setdefault(f"ber_vs_ebn0_C{tag}", []).append(name)
    for fig, names in sorted(ber_files.items()):
        manifest["figures"][fig] = sorted(names)

    energy = results.get("energy")
    if energy:
        lines = [f"# average harvested power (config={meta})",
                 "capacitance_F,node,K,P_bar_W"]
        for (cap, node) in sorted(energy, key=lambda k: (k[0], k[1])):
            rep = energy[(cap, node)]
            lines.append(f"{cap:.17g},{node},{rep.K},{rep.P_bar:.17g}")
        _write(out / "energy_table.csv", "\n".join(lines) + "\n", written)
        manifest["figures"]["harvested_power_table"] = ["energy_table.csv"]

    traces = results.get("traces")
    if traces:
        names = []
        for cap in sorted(traces):
            bits, traj = traces[cap]
            tag = _cap_tag(cap)
            name = f"trace_C{tag}.csv"
            lines = [f"# transient trace capacitance={cap:.17g} "
                     f"bits={''.join(str(int(b)) for b in bits)}",
                     "t,V_p,V_n,V_L,mode"]
            for i in range(traj.times.shape[0]):
                lines.append(f"{traj.times[i]:.17g},{traj.V_p[i]:.17g},"
                             f"{traj.V_n[i]:.17g},{traj.V_L[i]:.17g},"
                             f"{int(traj.modes[i])}")
            _write(out / name, "\n".join(lines) + "\n", written)
            mname = f"trace_C{tag}_symbols.csv"
            mlines = ["k,t,bit,x_k"]
            for k in range(traj.end_V_L.shape[0]):
                mlines.append(f"{k},{traj.end_times[k]:.17g},"
                              f"{int(bits[k])},{traj.end_V_L[k]:.17g}")
            _write(out / mname, "\n".join(mlines) + "\n", written)
            names += [name, mname]
        manifest["figures"]["transient_trace"] = sorted(names)

    mpath = out / "manifest.json"
    mpath.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    written.append(mpath)
    return sorted(written)
