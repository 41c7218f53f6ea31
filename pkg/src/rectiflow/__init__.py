"""Dual-diode differential rectifier: simulation, detection, and harvesting tools.

The package models a two-diode RF rectifier that serves simultaneously as an
energy harvester and a binary amplitude-shift-keying receiver.  It provides
an exact switched closed-form transient simulator with an independent RK4
verification oracle, tabulated end-of-symbol transition maps with a fast
symbol-level channel model, three detectors (midpoint threshold,
decision-directed adaptive, and blockwise exhaustive sequence detection),
harvested-power metrics, and a Monte Carlo experiment harness with a CLI.
"""

from .circuit_core import (
    CircuitParams,
    ConductionMode,
    DegenerateModeError,
    ModeCoefficients,
    RepeatedRootsError,
    classify_mode,
    continuity_constants,
    continuity_constants_confluent,
    diode_current,
    diode_voltages,
    internal_node_voltage,
    load_params,
    mode_coefficients,
    time_constant,
)
from .detectors import (
    DetectionResult,
    add_noise,
    bit_errors,
    caad_detect,
    ml_threshold_detect,
    mlsd_detect,
    pilot_init,
    snr_to_sigma,
)
from .energy import (
    EmptyInputError,
    EnergyReport,
    harvested_power_avg,
    time_averaged_power,
)
from .harness import (
    BerCurve,
    BerPoint,
    ExperimentConfig,
    FastPathError,
    emit_outputs,
    run_ber_experiment,
    run_energy_experiment,
    run_symbol_trace,
    wilson_interval,
)
from .statemap import (
    NoConvergenceError,
    OutOfDomainError,
    StateMap,
    build_state_maps,
    eval_map,
    load_state_map,
    save_state_map,
    steady_state_endpoints,
    symbol_channel_simulate,
)
from .transient import (
    NumericalDivergenceError,
    OutOfRangeError,
    Trajectory,
    TransientState,
    numeric_oracle_simulate,
    sample_end_of_symbol,
    simulate,
    source_waveform,
)

__version__ = "0.1.0"

__all__ = [
    "CircuitParams", "ConductionMode", "ModeCoefficients",
    "DegenerateModeError", "RepeatedRootsError", "classify_mode",
    "continuity_constants", "continuity_constants_confluent", "diode_current",
    "diode_voltages", "internal_node_voltage", "load_params",
    "mode_coefficients", "time_constant",
    "TransientState", "Trajectory", "NumericalDivergenceError",
    "OutOfRangeError", "simulate", "numeric_oracle_simulate",
    "sample_end_of_symbol", "source_waveform",
    "StateMap", "NoConvergenceError", "OutOfDomainError",
    "steady_state_endpoints", "build_state_maps", "eval_map",
    "symbol_channel_simulate", "save_state_map", "load_state_map",
    "DetectionResult", "add_noise", "snr_to_sigma", "ml_threshold_detect",
    "caad_detect", "mlsd_detect", "pilot_init", "bit_errors",
    "EnergyReport", "EmptyInputError", "harvested_power_avg",
    "time_averaged_power",
    "ExperimentConfig", "BerPoint", "BerCurve", "FastPathError",
    "wilson_interval", "run_ber_experiment", "run_energy_experiment",
    "run_symbol_trace", "emit_outputs",
    "__version__",
]
