"""
Disorder sampling service.

Draws reproducible coupling vectors J = (J_1, ..., J_M) aligned with an
interaction catalog and evaluates the catalog's variance budget.

Seed derivation is counter based: the generator for term k of sample s is
seeded by SeedSequence(master_seed, spawn_key=(s, k)), so any sample can be
regenerated alone, in any order, on any worker, bit for bit.
"""

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from app.models.disorder import InteractionCatalog
from app.utils.logging import get_logger

logger = get_logger(__name__)

_SEED_MASK = (1 << 64) - 1


class DisorderError(Exception):
    """Base exception for disorder sampling errors."""
    pass


@dataclass(frozen=True, eq=False)
class DisorderSample:
    """
    One realization of the coupling sequence.

    Attributes:
        seed: 64-bit seed derived from (master_seed, sample_index)
        sample_index: Index of the sample within its ensemble
        master_seed: Master seed of the ensemble
        values: Coupling values aligned with catalog order (length M)
    """
    seed: int
    sample_index: int
    master_seed: int
    values: np.ndarray = field(repr=False)

    @property
    def n_terms(self) -> int:
        return int(self.values.shape[0])

    def check_aligned(self, catalog: InteractionCatalog) -> None:
        """Raise DisorderError if the sample does not match the catalog."""
        if self.n_terms != catalog.n_terms:
            raise DisorderError(
                f"Sample has {self.n_terms} couplings but catalog has {catalog.n_terms} terms"
            )


def derive_seed(master_seed: int, sample_index: int) -> int:
    """64-bit seed of one sample, recorded for provenance."""
    sequence = np.random.SeedSequence(master_seed & _SEED_MASK, spawn_key=(sample_index,))
    return int(sequence.generate_state(1, np.uint64)[0])


def term_generator(master_seed: int, sample_index: int, term_index: int) -> np.random.Generator:
    """Independent generator for one (sample, term) counter pair."""
    sequence = np.random.SeedSequence(
        master_seed & _SEED_MASK, spawn_key=(sample_index, term_index)
    )
    return np.random.default_rng(sequence)


def draw_sample(
    catalog: InteractionCatalog,
    master_seed: int,
    sample_index: int,
) -> DisorderSample:
    """
    Draw one disorder sample.

    Each J_k is drawn from its term's distribution with a generator derived
    from (master_seed, sample_index, k); no generator state is shared.

    Args:
        catalog: Interaction catalog (defines M and the term order)
        master_seed: Ensemble master seed
        sample_index: Sample counter

    Returns:
        DisorderSample aligned with the catalog

    Examples:
        >>> from app.models.disorder import ConstantCoupling, InteractionTerm
        >>> cat = InteractionCatalog(terms=[InteractionTerm(support=(0, 1),
        ...     distribution=ConstantCoupling(value=0.7))])
        >>> draw_sample(cat, 1, 0).values.tolist()
        [0.7]
    """
    values = np.empty(catalog.n_terms, dtype=float)
    for term_index, term in enumerate(catalog.terms):
        rng = term_generator(master_seed, sample_index, term_index)
        values[term_index] = float(term.distribution.draw(rng))
    values.setflags(write=False)

    return DisorderSample(
        seed=derive_seed(master_seed, sample_index),
        sample_index=sample_index,
        master_seed=master_seed,
        values=values,
    )


def variance_budget(catalog: InteractionCatalog, n_sites: int) -> Tuple[float, float]:
    """
    Total coupling variance and the smallest admissible sigma^2.

    The budget condition is sum_k Var(J_k) <= sigma^2 N.

    Args:
        catalog: Interaction catalog
        n_sites: N

    Returns:
        (total_variance, sigma_squared = total_variance / N)

    Examples:
        >>> from app.models.disorder import GaussianCoupling, InteractionTerm
        >>> cat = InteractionCatalog(terms=[InteractionTerm(support=(0, 1),
        ...     distribution=GaussianCoupling(mean=0.0, std=1.0))])
        >>> variance_budget(cat, 2)
        (1.0, 0.5)
    """
    if n_sites < 1:
        raise DisorderError(f"n_sites must be positive, got {n_sites}")
    total = float(sum(term.distribution.variance() for term in catalog.terms))
    return total, total / n_sites
