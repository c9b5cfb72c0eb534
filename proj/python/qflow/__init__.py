"""Bohmian trajectories, Lyapunov spectra and quantum Lyapunov exponents for hydrogen wave-packets."""

from ._core import (
    IntegratorConfig,
    LyapunovConfig,
    NodeProximity,
    QuantumNumbers,
    StepUnderflow,
    Wavepacket,
    WavepacketSpec,
    bggs_spectrum,
    canonical_config,
    config_digest,
    density_relation_check,
    eigenstate_packet,
    estimate_lambda1,
    estimate_qle,
    flow_map,
    sample_initial_conditions,
    spin_packet,
    standard_packet,
    sum_rule_check,
)

__all__ = [
    "IntegratorConfig",
    "LyapunovConfig",
    "NodeProximity",
    "QuantumNumbers",
    "StepUnderflow",
    "Wavepacket",
    "WavepacketSpec",
    "bggs_spectrum",
    "canonical_config",
    "config_digest",
    "density_relation_check",
    "eigenstate_packet",
    "estimate_lambda1",
    "estimate_qle",
    "flow_map",
    "sample_initial_conditions",
    "spin_packet",
    "standard_packet",
    "sum_rule_check",
]
