"""Experiment orchestration: configs, BER sweeps, outputs, CLI plumbing."""

import dataclasses
import json

import numpy as np
import pytest

from rectiflow import cli
from rectiflow.harness import (
    DETECTOR_NAMES,
    ExperimentConfig,
    FastPathError,
    emit_outputs,
    run_ber_experiment,
    run_symbol_trace,
    wilson_interval,
)
from rectiflow.circuit_core import CircuitParams
from rectiflow.statemap import StateMap


# ---------------------------------------------------------------------
# Wilson intervals
# ---------------------------------------------------------------------

def test_wilson_frozen_values():
    lo, hi = wilson_interval(0, 100)
    assert lo == 0.0
    assert hi == pytest.approx(0.03699349876899627, abs=1e-12)
    lo, hi = wilson_interval(50, 100)
    assert lo == pytest.approx(0.40383152963549296, abs=1e-12)
    assert hi == pytest.approx(0.596168470364507, abs=1e-12)
    lo, hi = wilson_interval(100, 100)
    assert hi == 1.0
    assert lo == pytest.approx(0.9630065012310038, abs=1e-12)


def test_wilson_properties():
    rng = np.random.default_rng(21)
    for _ in range(300):
        n = int(rng.integers(1, 10_000))
        e = int(rng.integers(0, n + 1))
        lo, hi = wilson_interval(e, n)
        assert 0.0 <= lo <= e / n <= hi <= 1.0
        assert lo < hi


def test_wilson_edge_cases():
    assert wilson_interval(0, 0) == (0.0, 1.0)
    with pytest.raises(ValueError):
        wilson_interval(5, 4)
    with pytest.raises(ValueError):
        wilson_interval(-1, 4)


# ---------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------

def test_config_defaults():
    cfg = ExperimentConfig()
    assert cfg.capacitance_list == (2e-9, 10e-9)
    assert cfg.ebn0_grid == tuple(float(v) for v in range(0, 21, 2))
    assert cfg.detectors == DETECTOR_NAMES
    assert cfg.mlsd_L == 10
    assert cfg.min_errors == 100
    assert cfg.max_symbols == 10_000_000
    assert cfg.seed == 1234


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(capacitance_list=())
    with pytest.raises(ValueError):
        ExperimentConfig(capacitance_list=(0.0,))
    with pytest.raises(ValueError):
        ExperimentConfig(detectors=("caad", "turbo"))
    with pytest.raises(ValueError):
        ExperimentConfig(detectors=("caad", "caad"))
    with pytest.raises(ValueError):
        ExperimentConfig(mlsd_L=21)
    with pytest.raises(ValueError):
        ExperimentConfig(min_errors=49)
    with pytest.raises(ValueError):
        ExperimentConfig(ebn0_grid=(0.0, float("inf")))
    with pytest.raises(ValueError):
        ExperimentConfig(max_symbols=0)


def test_config_fingerprint():
    assert ExperimentConfig().fingerprint() == ExperimentConfig().fingerprint()
    assert ExperimentConfig(seed=99).fingerprint() \
        != ExperimentConfig().fingerprint()
    assert ExperimentConfig(detectors=("caad",)).fingerprint() \
        != ExperimentConfig().fingerprint()


# ---------------------------------------------------------------------
# BER experiments
# ---------------------------------------------------------------------

def _small_cfg(**kw):
    base = dict(capacitance_list=(2e-9,), detectors=("ml_vl", "caad"),
                ebn0_grid=(4.0, 8.0), min_errors=50, max_symbols=20_000,
                symbols_per_trial=10_000)
    base.update(kw)
    return ExperimentConfig(**base)


def test_ber_reproducible_and_byte_identical(tmp_path, maps_vl):
    cfg = _small_cfg()
    maps = {(2e-9, "vl"): maps_vl.by_cap[2e-9]}
    a = run_ber_experiment(cfg, maps=maps, run_guard=False)
    b = run_ber_experiment(cfg, maps=maps, run_guard=False)
    files_a = emit_outputs({"ber": a, "config": cfg}, tmp_path / "a")
    files_b = emit_outputs({"ber": b, "config": cfg}, tmp_path / "b")
    assert [f.name for f in files_a] == [f.name for f in files_b]
    for fa, fb in zip(files_a, files_b):
        assert fa.read_bytes() == fb.read_bytes(), fa.name


def test_ber_curve_structure(maps_vl):
    cfg = _small_cfg()
    curves = run_ber_experiment(cfg, maps={(2e-9, "vl"): maps_vl.by_cap[2e-9]},
                                run_guard=False)
    assert [c.detector for c in curves] == ["ml_vl", "caad"]
    for c in curves:
        assert c.capacitance == 2e-9 and c.node == "vl"
        assert [pt.ebn0_db for pt in c.points] == [4.0, 8.0]
        for pt in c.points:
            assert pt.errors >= cfg.min_errors or pt.budget_exhausted
            assert pt.symbols <= cfg.max_symbols
            lo, hi = pt.wilson()
            assert lo <= pt.ber <= hi


def test_ber_budget_exhaustion(maps_vl):
    """A clean channel at high SNR cannot reach min_errors in the budget."""
    cfg = _small_cfg(detectors=("caad",), ebn0_grid=(20.0,))
    curves = run_ber_experiment(cfg, maps={(2e-9, "vl"): maps_vl.by_cap[2e-9]},
                                run_guard=False)
    pt = curves[0].points[0]
    assert pt.budget_exhausted
    assert pt.symbols == cfg.max_symbols
    assert pt.errors < cfg.min_errors


def test_guard_rejects_tampered_map(maps_vl):
    good = maps_vl.by_cap[2e-9]
    bad = StateMap(grid=good.grid, mu_H=good.mu_H - 0.05, mu_L=good.mu_L,
                   v_L=good.v_L, v_H=good.v_H,
                   params_hash=good.params_hash, node=good.node)
    cfg = _small_cfg(detectors=("caad",), ebn0_grid=(8.0,))
    with pytest.raises(FastPathError):
        run_ber_experiment(cfg, maps={(2e-9, "vl"): bad}, run_guard=True)


def test_mismatched_map_refused(maps_vl):
    cfg = _small_cfg(detectors=("caad",))
    with pytest.raises(ValueError, match="different circuit"):
        run_ber_experiment(cfg, maps={(2e-9, "vl"): maps_vl.by_cap[10e-9]},
                           run_guard=False)


def test_single_ended_threshold_detector(maps_vl, map_vp_2nf):
    """ml_vp reads the single-ended node and pays for its halved swing."""
    cfg = _small_cfg(detectors=("ml_vp", "ml_vl"), ebn0_grid=(8.0,))
    curves = run_ber_experiment(
        cfg, maps={(2e-9, "vp"): map_vp_2nf,
                   (2e-9, "vl"): maps_vl.by_cap[2e-9]},
        run_guard=False)
    by_det = {c.detector: c for c in curves}
    assert by_det["ml_vp"].node == "vp"
    assert by_det["ml_vl"].node == "vl"
    assert by_det["ml_vp"].points[0].ber > by_det["ml_vl"].points[0].ber


# ---------------------------------------------------------------------
# Traces and emission
# ---------------------------------------------------------------------

def test_symbol_trace_and_emission(tmp_path):
    p = CircuitParams()
    dt = 1.0 / (64.0 * p.f_c)
    traces = {}
    for cap in (2e-9, 10e-9):
        pc = p.with_capacitance(cap)
        bits, traj = run_symbol_trace(pc, dt=dt)
        assert bits.shape == (15,)
        assert traj.end_V_L.shape == (15,)
        assert traj.times.shape[0] > 0
        traces[cap] = (bits, traj)
    files = emit_outputs({"traces": traces}, tmp_path)
    names = sorted(f.name for f in files)
    assert names == ["manifest.json", "trace_C10n.csv",
                     "trace_C10n_symbols.csv", "trace_C2n.csv",
                     "trace_C2n_symbols.csv"]
    for cap_tag in ("2n", "10n"):
        sym = (tmp_path / f"trace_C{cap_tag}_symbols.csv").read_text()
        assert len(sym.strip().splitlines()) == 16  # header + 15 markers
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["figures"]["transient_trace"] == [
        "trace_C10n.csv", "trace_C10n_symbols.csv",
        "trace_C2n.csv", "trace_C2n_symbols.csv"]


def test_symbol_trace_validates_bits():
    with pytest.raises(ValueError):
        run_symbol_trace(CircuitParams(), bits="")
    with pytest.raises(ValueError):
        run_symbol_trace(CircuitParams(), bits="0120")


def test_empty_detector_set_emits_valid_manifest(tmp_path):
    cfg = ExperimentConfig(detectors=())
    curves = run_ber_experiment(cfg, maps={}, run_guard=False)
    assert curves == []
    files = emit_outputs({"ber": curves, "config": cfg}, tmp_path)
    assert [f.name for f in files] == ["manifest.json"]
    manifest = json.loads(files[0].read_text())
    assert manifest == {"figures": {}}
    # deterministic on re-emission
    again = emit_outputs({"ber": [], "config": cfg}, tmp_path)
    assert files[0].read_bytes() == again[0].read_bytes()


# ---------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------

def test_parse_ebn0():
    assert cli._parse_ebn0("0:2:20") == tuple(float(v) for v in range(0, 21, 2))
    assert cli._parse_ebn0("5:2.5:10") == (5.0, 7.5, 10.0)
    for bad in ("0:2", "0:-2:10", "10:2:0", "a:b:c"):
        with pytest.raises(ValueError):
            cli._parse_ebn0(bad)


def test_cli_parser_namespaces():
    ap = cli._build_parser()
    sim = ap.parse_args(["simulate", "--bits", "10", "--cap", "5e-9"])
    assert sim.func is cli._cmd_simulate and sim.cap == 5e-9
    smp = ap.parse_args(["statemap", "--grid", "51"])
    assert smp.func is cli._cmd_statemap and smp.grid == 51
    ber = ap.parse_args(["ber", "--detectors", "caad", "--ebn0", "0:2:10",
                         "--min-errors", "60"])
    assert ber.func is cli._cmd_ber and ber.min_errors == 60
    en = ap.parse_args(["energy", "--node", "vp", "--symbols", "128"])
    assert en.func is cli._cmd_energy and en.node == "vp" and en.symbols == 128


def test_cli_simulate_smoke(tmp_path, capsys):
    out = tmp_path / "trace.csv"
    rc = cli.main(["simulate", "--bits", "101", "--dt", "1.953125e-12",
                   "--out", str(out)])
    assert rc == 0
    assert out.exists()
    sym = tmp_path / "trace_symbols.csv"
    assert len(sym.read_text().strip().splitlines()) == 4  # header + 3
    assert "wrote" in capsys.readouterr().out


def test_cli_energy_smoke(tmp_path, capsys):
    out = tmp_path / "energy.csv"
    rc = cli.main(["energy", "--symbols", "64", "--out", str(out)])
    assert rc == 0
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 66  # comment + header + 64 rows
    assert "P_bar" in capsys.readouterr().out


def test_cli_error_exit(tmp_path, capsys):
    rc = cli.main(["simulate", "--config", str(tmp_path / "nope.cfg")])
    assert rc == 1
    assert "rectiflow: error:" in capsys.readouterr().err


def test_cli_config_roundtrip(tmp_path):
    cfgf = tmp_path / "c.cfg"
    cfgf.write_text("A_H=0.8\n")
    out = tmp_path / "t.csv"
    rc = cli.main(["simulate", "--config", str(cfgf), "--bits", "11",
                   "--dt", "1.953125e-12", "--out", str(out)])
    assert rc == 0
    assert "C_p=2.0000000000000001e-09" in out.read_text().splitlines()[0] \
        or "C_p=2e-09" in out.read_text().splitlines()[0]
