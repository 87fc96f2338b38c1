"""Mismatch-based analog ELM chip simulator."""

import json as _json

from . import _mmelm
from ._mmelm import (
    ChipConfig,
    ConfigError,
    DomainError,
    MmelmError,
    NeuronModel,
    WeightMatrix,
    build_hidden_matrix,
    build_virtual_matrix,
    contour_counter_capacity,
    dac_current,
    dataset_available,
    default_chip,
    default_sinc_chip,
    energy_per_conversion,
    energy_per_mac,
    energy_per_mac_system,
    forward,
    generate_sinc,
    hidden_count,
    neuron_frequency,
    normalize_hidden,
    predict,
    sample_mismatch,
    train,
)

__all__ = [name for name in dir(_mmelm) if not name.startswith("_")] + ["chip_to_dict"]


def chip_to_dict(cfg):
    """Chip configuration as a plain dict."""
    return _json.loads(cfg.to_json())


def speed_report(cfg):
    return _json.loads(_mmelm.speed_report(cfg))


def run_regression(cfg, trials=1, seed=1, train_n=5000, test_n=1000, noise=0.2):
    """Sinc regression report as a dict with columns, rows, summary and provenance."""
    return _json.loads(_mmelm.run_regression(cfg, trials, seed, train_n, test_n, noise))


def run_benchmark(name, trials=20, seed=1, hidden=128):
    """Classification benchmark on an installed dataset; raises MmelmError when absent."""
    return _json.loads(_mmelm.run_benchmark(name, trials, seed, hidden))
