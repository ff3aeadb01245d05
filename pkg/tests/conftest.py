"""
Test fixtures for the disordered spin laboratory.

This module provides spin magnitudes, site sets and small study configs
covering the model families used across the suite.
"""
from pathlib import Path
from typing import Any, Callable, Dict

import pytest

from app.core.spin_algebra import SiteSet, SpinMagnitude
from app.models.study import StudyConfig


@pytest.fixture
def spin_half() -> SpinMagnitude:
    return SpinMagnitude(1)


@pytest.fixture
def spin_one() -> SpinMagnitude:
    return SpinMagnitude(2)


@pytest.fixture
def chain3() -> SiteSet:
    return SiteSet.chain(3)


@pytest.fixture
def make_config() -> Callable[..., StudyConfig]:
    """
    Factory for small validated study configs.

    Keyword arguments override the [study] fields; ``model`` and ``replica``
    take plain dicts as they would appear in a config file.
    """

    def factory(**overrides: Any) -> StudyConfig:
        data: Dict[str, Any] = {
            "name": "test",
            "size_ladder": [2, 3],
            "beta": 1.0,
            "lambda_grid": [0.5],
            "samples_per_size": 4,
            "master_seed": 5,
        }
        data.update(overrides)
        return StudyConfig.model_validate(data)

    return factory


@pytest.fixture
def independent_sites_config(make_config) -> StudyConfig:
    """
    Uncoupled spin-1/2 sites: H_lambda = -lambda sum_j S_j^z.

    Every sample is identical, <S^z> = tanh(beta lambda / 2) / 2 and the
    Gibbs variance of the magnetization density is sech^2(beta lambda / 2) / (4N).
    """
    return make_config(
        name="independent",
        size_ladder=[1, 2, 4],
        lambda_grid=[0.5],
        model={"coupling": "none"},
    )


@pytest.fixture
def heisenberg_config(make_config) -> StudyConfig:
    """Random-bond Heisenberg chain, S = 1/2, Gaussian bonds."""
    return make_config(
        name="heisenberg",
        size_ladder=[2, 3, 4],
        lambda_grid=[0.3],
        samples_per_size=12,
        model={"coupling": "heisenberg", "distribution": {"kind": "gaussian", "std": 1.0}},
    )


@pytest.fixture
def ising_field_config(make_config) -> StudyConfig:
    """Random-field Ising ring (classical path)."""
    return make_config(
        name="rfim",
        size_ladder=[3, 4],
        beta=0.8,
        lambda_grid=[0.0, 0.001, 0.002, 0.003, 0.004],
        samples_per_size=8,
        model={
            "coupling": "ising",
            "lattice": "ring",
            "distribution": {"kind": "two_point", "value": 1.0},
            "random_field": {"kind": "gaussian", "std": 0.5},
        },
    )


@pytest.fixture
def sk_replica_config(make_config) -> StudyConfig:
    """Classical SK model with a two-replica bond overlap."""
    return make_config(
        name="sk",
        size_ladder=[3, 4],
        beta=2.0,
        lambda_grid=[0.0, 0.1],
        samples_per_size=10,
        model={"coupling": "sk", "lattice": "complete"},
        replica={"n_replicas": 2, "path": "classical", "overlap": {"supports": "bonds"}},
    )


@pytest.fixture
def write_config(tmp_path: Path) -> Callable[[str, str], Path]:
    """Write TOML text to a file under tmp_path and return its path."""

    def writer(text: str, name: str = "study.toml") -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return writer
