"""
Algebra Self-Check Service

The `verify-algebra` suite: exact identities of the spin algebra and the Gibbs
engine, evaluated on fixed and on seeded random instances. Each family of
identities is recorded as one check with its worst deviation, so a failure
names which identity broke and by how much.
"""

from typing import Dict, List, Optional

import numpy as np

from app.core.config import settings
from app.core.provenance import generate_config_hash
from app.core.gibbs import (
    classical_gibbs_state,
    diagonalize,
    duhamel_pair,
    expectation,
    gibbs_state,
    harris_bounds,
    log_partition,
    log_z_first_difference,
    moments,
    z_second_difference,
)
from app.core.spin_algebra import (
    LocalOperator,
    ManyBodyOperator,
    SiteSet,
    SpinMagnitude,
    commutator,
    embed,
    spin_matrices,
    su2_rotate,
)
from app.models.disorder import GaussianCoupling
from app.models.reports import StudyResult
from app.models.study import OrderOperatorSpec
from app.services.disorder_sampler import draw_sample
from app.services.model_builder import (
    build_hamiltonian,
    build_order_operator,
    build_template,
    heisenberg_catalog,
    ising_catalog,
    order_diagonal,
    random_field_catalog,
)
from app.utils.logging import VerdictLogger, get_logger

logger = get_logger(__name__)

SPIN_VALUES = (SpinMagnitude(1), SpinMagnitude(2), SpinMagnitude(3), SpinMagnitude(4))
BETAS = (0.5, 1.0, 2.0)
DERIVATIVE_TOLERANCE = 1e-6
HARRIS_SLACK = 1e-9
EQUIVALENCE_TOLERANCE = 1e-10
EQUIVALENCE_INSTANCES = 20
EQUIVALENCE_SIZES = tuple(range(2, 11))


# ============================================================================
# Random instances
# ============================================================================


def random_hermitian(rng: np.random.Generator, n_sites: int, local_dim: int = 2) -> ManyBodyOperator:
    """Random Hermitian operator with spectral norm 1."""
    dim = local_dim ** n_sites
    raw = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    entries = 0.5 * (raw + raw.conj().T)
    entries /= np.max(np.abs(np.linalg.eigvalsh(entries)))
    return ManyBodyOperator(n_sites, local_dim, entries, True)


def _relative_error(approx: float, exact: float, scale: float) -> float:
    """Error relative to |exact|, floored at the natural magnitude ``scale``."""
    return abs(approx - exact) / max(abs(exact), scale)


# ============================================================================
# Individual checks
# ============================================================================


def check_commutation_relations(verdicts: VerdictLogger) -> float:
    """
    [S^x, S^y] = i S^z cyclically and S.S = S(S+1) I for every spin in SPIN_VALUES.

    Returns:
        Largest entrywise deviation
    """
    worst = 0.0
    for spin in SPIN_VALUES:
        sx, sy, sz = (op.entries for op in spin_matrices(spin))
        for a, b, c in ((sx, sy, sz), (sy, sz, sx), (sz, sx, sy)):
            worst = max(worst, float(np.max(np.abs(a @ b - b @ a - 1j * c))))
        casimir = sx @ sx + sy @ sy + sz @ sz - spin.casimir * np.eye(spin.dim)
        worst = max(worst, float(np.max(np.abs(casimir))))

    passed = worst <= settings.ALGEBRA_TOLERANCE
    verdicts.log_check(
        "commutation_relations",
        passed,
        f"max deviation {worst:.3e}",
        {"max_deviation": worst, "spins": [s.s for s in SPIN_VALUES]},
    )
    return worst


def check_embedding(verdicts: VerdictLogger, rng: np.random.Generator) -> float:
    """
    embed is multiplicative: distinct-site factors multiply into one embedding,
    same-site factors multiply locally, and operators on disjoint sites commute.
    """
    sites = SiteSet.chain(3)
    worst = 0.0
    for spin in SPIN_VALUES[:2]:
        d = spin.dim
        a = LocalOperator.from_matrix(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
        b = LocalOperator.from_matrix(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))

        ea, eb = embed([(0, a)], sites), embed([(2, b)], sites)
        joint = embed([(0, a), (2, b)], sites)
        worst = max(worst, float(np.max(np.abs((ea @ eb).entries - joint.entries))))
        worst = max(worst, float(np.max(np.abs(commutator(ea, eb).entries))))

        same = embed([(1, a)], sites) @ embed([(1, b)], sites)
        worst = max(worst, float(np.max(np.abs(same.entries - embed([(1, a @ b)], sites).entries))))

    passed = worst <= settings.ALGEBRA_TOLERANCE * 100
    verdicts.log_check("embed_multiplicative", passed, f"max deviation {worst:.3e}",
                       {"max_deviation": worst})
    return worst


def check_duhamel_derivatives(verdicts: VerdictLogger, rng: np.random.Generator, trials: int) -> float:
    """
    beta <O> against the first difference of log Z, and beta^2 (O, O) against
    the mixed second difference of Z / Z(0), on random (H, O) pairs.
    """
    worst = 0.0
    for trial in range(trials):
        n_sites = 1 + trial % 3
        beta = BETAS[trial % len(BETAS)]
        h = random_hermitian(rng, n_sites)
        o = random_hermitian(rng, n_sites)
        state = gibbs_state(diagonalize(h), beta)

        first = log_z_first_difference(h, o, beta)
        worst = max(worst, _relative_error(first, beta * expectation(state, o), beta))

        second = z_second_difference(h, o, o, beta)
        worst = max(worst, _relative_error(second, beta ** 2 * duhamel_pair(state, o, o), beta ** 2))

    passed = worst <= DERIVATIVE_TOLERANCE
    verdicts.log_check("duhamel_derivative_identity", passed, f"max relative error {worst:.3e}",
                       {"max_relative_error": worst, "trials": trials})
    return worst


def check_harris_sandwich(verdicts: VerdictLogger, rng: np.random.Generator, trials: int) -> float:
    """
    lower <= (O, O) <= upper on random pairs; all three coincide when O is a
    function of H.

    Returns:
        Largest violation (negative when the sandwich holds everywhere)
    """
    violation = -np.inf
    equality_gap = 0.0
    for trial in range(trials):
        n_sites = 1 + trial % 3
        beta = BETAS[trial % len(BETAS)]
        h = random_hermitian(rng, n_sites)
        o = random_hermitian(rng, n_sites)
        state = gibbs_state(diagonalize(h), beta)
        bounds = harris_bounds(state, h, o)
        violation = max(violation, bounds.lower - bounds.duhamel, bounds.duhamel - bounds.upper)

        commuting = (h @ h).with_entries((h @ h).entries - 0.5 * h.entries, True)
        equal = harris_bounds(state, h, commuting)
        equality_gap = max(
            equality_gap,
            abs(equal.upper - equal.duhamel),
            abs(equal.upper - equal.lower),
        )

    passed = violation <= HARRIS_SLACK and equality_gap <= 1e-9
    verdicts.log_check(
        "harris_sandwich",
        passed,
        f"max violation {violation:.3e}, commuting gap {equality_gap:.3e}",
        {"max_violation": float(violation), "commuting_gap": equality_gap, "trials": trials},
    )
    return float(violation)


def check_classical_equivalence(
    verdicts: VerdictLogger,
    seed: int,
    instances: int = EQUIVALENCE_INSTANCES,
) -> float:
    """
    Dense and diagonal evaluation agree on seeded random Ising models.

    Instance i has N = EQUIVALENCE_SIZES[i mod 9] sites with Gaussian random
    fields; even instances couple nearest neighbors on a chain, odd instances
    couple all pairs.
    """
    spin = SpinMagnitude(1)
    order = OrderOperatorSpec()
    worst = 0.0
    for index in range(instances):
        n_sites = EQUIVALENCE_SIZES[index % len(EQUIVALENCE_SIZES)]
        sites = SiteSet.chain(n_sites)
        bonds = sites.nearest_neighbor_bonds() if index % 2 == 0 else sites.all_pairs()
        catalog = ising_catalog(bonds, GaussianCoupling()).extended(
            random_field_catalog(sites, GaussianCoupling(std=0.5))
        )
        sample = draw_sample(catalog, seed, index)
        energies = build_template(catalog, sites, spin, dense=False).diagonal(sample)
        eigen = diagonalize(build_hamiltonian(catalog, sample, sites, spin))
        o_dense = build_order_operator(order, sites, spin)
        o_diag = order_diagonal(order, sites, spin)

        for beta in BETAS:
            dense = gibbs_state(eigen, beta, n_sites)
            classical = classical_gibbs_state(energies, beta, n_sites)
            dense_moments = moments(dense, o_dense)
            classical_moments = classical.moments(o_diag)
            worst = max(
                worst,
                abs(dense.log_z - classical.log_z),
                abs(dense_moments.mean - classical_moments.mean),
                abs(dense_moments.second_moment - classical_moments.second_moment),
                abs(dense_moments.duhamel - classical_moments.duhamel),
            )

    sizes = sorted({EQUIVALENCE_SIZES[i % len(EQUIVALENCE_SIZES)] for i in range(instances)})
    passed = worst <= EQUIVALENCE_TOLERANCE
    verdicts.log_check(
        "classical_dense_equivalence",
        passed,
        f"max deviation {worst:.3e} over {instances} instances",
        {
            "max_deviation": worst,
            "instances": instances,
            "sizes": sizes,
        },
    )
    return worst


def check_su2_invariance(verdicts: VerdictLogger, rng: np.random.Generator) -> float:
    """Heisenberg Hamiltonians commute with global rotations."""
    worst = 0.0
    for spin in SPIN_VALUES[:2]:
        sites = SiteSet.chain(3)
        catalog = heisenberg_catalog(sites.nearest_neighbor_bonds(), GaussianCoupling())
        h = build_template(catalog, sites, spin).dense(draw_sample(catalog, 7, 0))
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        rotated = su2_rotate(h, axis, float(rng.uniform(0.0, 2.0 * np.pi)))
        worst = max(worst, float(np.max(np.abs(rotated.entries - h.entries))))
        worst = max(worst, abs(log_partition(rotated, 1.0) - log_partition(h, 1.0)))

    passed = worst <= 1e-10
    verdicts.log_check("su2_invariance", passed, f"max deviation {worst:.3e}",
                       {"max_deviation": worst})
    return worst


# ============================================================================
# Suite
# ============================================================================


# Settings that decide the outcome of the suite.
SUITE_SETTINGS = {
    "ALGEBRA_TOLERANCE",
    "REALITY_TOLERANCE",
    "DEGENERACY_THRESHOLD",
    "AXIS_TOLERANCE",
    "FIRST_DIFFERENCE_STEP",
    "SECOND_DIFFERENCE_STEP",
}


def algebra_suite_hash(seed: int, derivative_trials: int, harris_trials: int) -> str:
    """Hash of the suite parameters and the effective numerical settings."""
    return generate_config_hash({
        "suite": "verify-algebra",
        "seed": seed,
        "derivative_trials": derivative_trials,
        "harris_trials": harris_trials,
        "equivalence_instances": EQUIVALENCE_INSTANCES,
        "settings": settings.model_dump(include=SUITE_SETTINGS),
    })


def run_algebra_suite(
    seed: int = 0,
    derivative_trials: int = 50,
    harris_trials: int = 100,
    verdicts: Optional[VerdictLogger] = None,
) -> StudyResult:
    """
    Run every identity check with a seeded generator.

    Args:
        seed: Seed of the random instances
        derivative_trials: Random (H, O) pairs for the derivative identity
        harris_trials: Random (H, O) pairs for the Harris sandwich
        verdicts: Verdict logger to record into

    Returns:
        StudyResult of kind "algebra"; passed when every check holds
    """
    verdicts = verdicts or VerdictLogger("verify-algebra")
    rng = np.random.default_rng(seed)

    deviations: Dict[str, float] = {
        "commutation_relations": check_commutation_relations(verdicts),
        "embed_multiplicative": check_embedding(verdicts, rng),
        "duhamel_derivative_identity": check_duhamel_derivatives(verdicts, rng, derivative_trials),
        "harris_sandwich": check_harris_sandwich(verdicts, rng, harris_trials),
        "classical_dense_equivalence": check_classical_equivalence(verdicts, seed),
        "su2_invariance": check_su2_invariance(verdicts, rng),
    }
    logger.info("Algebra suite finished", extra={"deviations": deviations})

    failed: List[str] = [r["check"] for r in verdicts.records if r["outcome"] != "pass"]
    return StudyResult(
        study="verify-algebra",
        kind="algebra",
        config_hash=algebra_suite_hash(seed, derivative_trials, harris_trials),
        master_seed=seed,
        passed=not failed,
        checks=list(verdicts.records),
        verdict_summary=verdicts.get_summary(),
    )
