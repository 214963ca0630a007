"""Shared scenario builders for the harness and acceptance tests."""

from __future__ import annotations

import numpy as np
import pytest

from anc_lab.harness import NoiseConfig, PathConfig, ScenarioConfig

FIVE_TONES = (300.0, 400.0, 500.0, 600.0, 700.0)


def crosstalk_config(algorithm: str, **overrides) -> ScenarioConfig:
    """Four strongly coupled nodes under a shared five-tone reference."""
    cfg = ScenarioConfig(
        n_nodes=4,
        algorithm=algorithm,
        reference_mode="shared-single",
        n_taps=512,
        estimate_len=256,
        mu_bar=0.02,
        alpha=(100.0,),
        T_seconds=1.0,
        duration_seconds=30.0,
        noise=NoiseConfig(kind="multitone", tones_hz=FIVE_TONES, amplitudes=(2.0,), sensor_noise_rms=0.03),
        paths=PathConfig(coupling_gain=0.8, seed=5),
    )
    return cfg.replace(**overrides).validate()


def broadband_config(algorithm: str, **overrides) -> ScenarioConfig:
    """Same plant as :func:`crosstalk_config` driven by 200-600 Hz noise."""
    cfg = ScenarioConfig(
        n_nodes=4,
        algorithm=algorithm,
        reference_mode="per-node",
        n_taps=512,
        estimate_len=256,
        mu_bar=0.02,
        alpha=(10.0,),
        T_seconds=1.0,
        duration_seconds=30.0,
        noise=NoiseConfig(kind="bandlimited", low_hz=200.0, high_hz=600.0, target_rms=2.0),
        paths=PathConfig(coupling_gain=0.8, seed=5),
    )
    return cfg.replace(**overrides).validate()


def small_config(algorithm: str = "sb-wcfxlms", **overrides) -> ScenarioConfig:
    """A fast two-node scenario for harness plumbing tests."""
    cfg = ScenarioConfig(
        n_nodes=2,
        algorithm=algorithm,
        n_taps=32,
        estimate_len=16,
        mu_bar=0.05,
        alpha=(10.0,),
        T_seconds=0.05,
        duration_seconds=0.5,
        block_seconds=0.1,
        spectrum_seconds=0.3,
        noise=NoiseConfig(tones_hz=(500.0, 1000.0)),
        paths=PathConfig(primary_len=32, secondary_len=16, primary_delay_min=2, primary_delay_max=6, coupling_gain=0.3),
    )
    return cfg.replace(**overrides).validate()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance report ----------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


class criterion:
    """Context manager that records one PASS/FAIL line for an acceptance criterion."""

    def __init__(self, name: str, summary: str):
        self.name = name
        self.summary = summary
        self.detail = ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        line = f"{status}  {self.name}  {self.summary}"
        if self.detail:
            line += f"  [{self.detail}]"
        if exc_type is not None and exc is not None:
            line += f"  ({exc_type.__name__}: {str(exc).splitlines()[0] if str(exc) else ''})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return False


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
