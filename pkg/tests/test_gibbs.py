"""
Tests for the Gibbs engine.

Closed forms for a free spin-1/2 in a field, Duhamel products against
finite differences of the partition function, the Harris sandwich, and the
classical fast path against dense diagonalization.
"""

import numpy as np
import pytest
from hypothesis import given, settings as hypothesis_settings, strategies as st
from hypothesis.extra.numpy import arrays

from app.core.config import settings
from app.core.gibbs import (
    GibbsEngineError,
    NonDiagonalError,
    NonHermitianError,
    as_diagonal,
    classical_fast_path,
    classical_gibbs_state,
    diagonalize,
    duhamel_kernel,
    duhamel_pair,
    expectation,
    gibbs_state,
    harris_bounds,
    log_partition,
    log_z_first_difference,
    moments,
    truncated_duhamel_pair,
    z_second_difference,
)
from app.core.spin_algebra import (
    ManyBodyOperator,
    SiteSet,
    embed,
    spin_component,
    zero_operator,
)
from app.models.disorder import GaussianCoupling
from app.models.study import OrderOperatorSpec
from app.services.disorder_sampler import draw_sample
from app.services.model_builder import (
    build_order_operator,
    build_template,
    ising_catalog,
    order_diagonal,
    random_field_catalog,
)
from app.services.self_check import check_classical_equivalence, random_hermitian
from app.utils.logging import VerdictLogger

pytestmark = [pytest.mark.unit, pytest.mark.gibbs]


def _field_spin(spin_half, lam: float) -> tuple:
    """H = -lam S^z on one site, with S^x and S^z embedded."""
    sites = SiteSet.chain(1)
    sz = embed([(0, spin_component(spin_half, "z"))], sites)
    sx = embed([(0, spin_component(spin_half, "x"))], sites)
    return sz.scale(-lam), sz, sx


class TestFreeSpin:
    """Closed forms for a single spin-1/2 in a longitudinal field."""

    @pytest.mark.parametrize("beta,lam", [(1.0, 0.5), (2.0, 1.3), (0.3, -0.7)])
    def test_log_z_and_magnetization(self, spin_half, beta, lam):
        h, sz, _ = _field_spin(spin_half, lam)
        state = gibbs_state(diagonalize(h), beta)
        assert state.log_z == pytest.approx(np.log(2.0 * np.cosh(beta * lam / 2.0)))
        assert state.psi == pytest.approx(state.log_z)
        assert expectation(state, sz) == pytest.approx(0.5 * np.tanh(beta * lam / 2.0))

    def test_gibbs_variance(self, spin_half):
        beta, lam = 1.5, 0.8
        h, sz, _ = _field_spin(spin_half, lam)
        stats = moments(gibbs_state(diagonalize(h), beta), sz)
        assert stats.gibbs_variance == pytest.approx(0.25 / np.cosh(beta * lam / 2.0) ** 2)
        assert stats.duhamel == pytest.approx(stats.second_moment)

    def test_transverse_duhamel_product(self, spin_half):
        beta, lam = 1.2, 0.9
        h, _, sx = _field_spin(spin_half, lam)
        state = gibbs_state(diagonalize(h), beta)
        a = beta * lam / 2.0
        assert duhamel_pair(state, sx, sx) == pytest.approx(np.tanh(a) / (4.0 * a))
        assert expectation(state, sx) == pytest.approx(0.0, abs=1e-14)

    def test_free_energy_density(self, spin_half, chain3):
        state = gibbs_state(diagonalize(zero_operator(chain3, 2)), 1.0)
        assert state.free_energy.psi == pytest.approx(np.log(2.0))


class TestDiagonalization:
    """Tests for diagonalize and gibbs_state preconditions."""

    def test_non_hermitian_rejected(self):
        op = ManyBodyOperator(1, 2, np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex), False)
        with pytest.raises(NonHermitianError):
            diagonalize(op)

    @pytest.mark.parametrize("beta", [0.0, -1.0])
    def test_nonpositive_beta(self, chain3, beta):
        with pytest.raises(GibbsEngineError):
            gibbs_state(diagonalize(zero_operator(chain3, 2)), beta)

    def test_eigenvectors_are_deterministic(self):
        h = random_hermitian(np.random.default_rng(3), 3)
        first = diagonalize(h)
        second = diagonalize(h)
        assert np.array_equal(first.eigenvectors, second.eigenvectors)
        pivots = first.eigenvectors[np.argmax(np.abs(first.eigenvectors) > 1e-8, axis=0),
                                    np.arange(first.dim)]
        assert np.allclose(pivots.imag, 0.0)
        assert np.all(pivots.real > 0)

    def test_large_beta_is_stable(self):
        h = random_hermitian(np.random.default_rng(4), 3).scale(50.0)
        state = gibbs_state(diagonalize(h), 100.0)
        assert np.isfinite(state.log_z)
        assert state.weights.sum() == pytest.approx(1.0)

    def test_log_partition_matches_state(self):
        h = random_hermitian(np.random.default_rng(5), 2)
        assert log_partition(h, 0.7) == pytest.approx(gibbs_state(diagonalize(h), 0.7).log_z)


class TestDuhamelKernel:
    """Tests for the Duhamel kernel."""

    def test_degenerate_spectrum(self, chain3):
        state = gibbs_state(diagonalize(zero_operator(chain3, 2)), 2.0)
        assert np.allclose(duhamel_kernel(state), 1.0 / 8.0)

    def test_symmetric_and_diagonal_weights(self):
        state = gibbs_state(diagonalize(random_hermitian(np.random.default_rng(6), 3)), 1.3)
        kernel = duhamel_kernel(state)
        assert np.allclose(kernel, kernel.T)
        assert np.allclose(np.diag(kernel), state.weights)
        assert np.all(kernel >= 0.0)


@pytest.mark.algebra
class TestDuhamelIdentities:
    """Property tests tying Duhamel products to derivatives of Z."""

    @hypothesis_settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1), beta=st.sampled_from([0.5, 1.0, 2.0]))
    def test_first_derivative(self, seed, beta):
        rng = np.random.default_rng(seed)
        h, o = random_hermitian(rng, 2), random_hermitian(rng, 2)
        state = gibbs_state(diagonalize(h), beta)
        assert log_z_first_difference(h, o, beta) == pytest.approx(
            beta * expectation(state, o), rel=1e-6, abs=1e-7
        )

    @hypothesis_settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1), beta=st.sampled_from([0.5, 1.0, 2.0]))
    def test_second_derivative(self, seed, beta):
        rng = np.random.default_rng(seed)
        h, o1, o2 = (random_hermitian(rng, 2) for _ in range(3))
        state = gibbs_state(diagonalize(h), beta)
        exact = beta ** 2 * duhamel_pair(state, o1, o2)
        assert z_second_difference(h, o1, o2, beta) == pytest.approx(exact, abs=1e-5 * beta ** 2)

    def test_default_steps(self):
        rng = np.random.default_rng(12)
        h, o = random_hermitian(rng, 2), random_hermitian(rng, 2)
        assert settings.FIRST_DIFFERENCE_STEP == 1e-5
        assert settings.SECOND_DIFFERENCE_STEP == 1e-4
        assert log_z_first_difference(h, o, 1.0) == log_z_first_difference(h, o, 1.0, step=1e-5)
        assert z_second_difference(h, o, o, 1.0) == z_second_difference(h, o, o, 1.0, step=1e-4)

    @hypothesis_settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1), beta=st.floats(0.1, 5.0))
    def test_harris_sandwich(self, seed, beta):
        rng = np.random.default_rng(seed)
        h, o = random_hermitian(rng, 2), random_hermitian(rng, 2)
        bounds = harris_bounds(gibbs_state(diagonalize(h), beta), h, o)
        assert bounds.holds()
        assert bounds.lower <= bounds.upper + 1e-12

    def test_harris_equality_for_commuting_observable(self):
        h = random_hermitian(np.random.default_rng(8), 2)
        o = (h @ h) - h.scale(0.5)
        bounds = harris_bounds(gibbs_state(diagonalize(h), 1.0), h, o)
        assert bounds.lower == pytest.approx(bounds.upper)
        assert bounds.duhamel == pytest.approx(bounds.upper)

    def test_pair_symmetry_and_truncation(self):
        rng = np.random.default_rng(9)
        h, o1, o2 = (random_hermitian(rng, 2) for _ in range(3))
        state = gibbs_state(diagonalize(h), 1.1)
        assert duhamel_pair(state, o1, o2) == pytest.approx(duhamel_pair(state, o2, o1))
        assert truncated_duhamel_pair(state, o1, o1) == pytest.approx(
            moments(state, o1).truncated_duhamel
        )
        assert truncated_duhamel_pair(state, o1, o1) >= -1e-12


class TestClassicalFastPath:
    """Tests for Gibbs sums over basis states."""

    def test_matches_dense(self):
        rng = np.random.default_rng(10)
        energies = rng.normal(size=8)
        observable = rng.normal(size=8)
        dense_h = ManyBodyOperator(3, 2, np.diag(energies).astype(complex), True)
        dense_o = ManyBodyOperator(3, 2, np.diag(observable).astype(complex), True)
        state = gibbs_state(diagonalize(dense_h), 1.7)
        summary = classical_fast_path(energies, {"o": observable}, 1.7, 3)
        dense_moments = moments(state, dense_o)
        assert summary.log_z == pytest.approx(state.log_z)
        assert summary.psi == pytest.approx(state.psi)
        assert summary.observables["o"].mean == pytest.approx(dense_moments.mean)
        assert summary.observables["o"].second_moment == pytest.approx(dense_moments.second_moment)
        assert summary.observables["o"].duhamel == pytest.approx(dense_moments.duhamel)

    def test_accepts_diagonal_operator(self):
        op = ManyBodyOperator(1, 2, np.diag([1.0, -1.0]).astype(complex), True)
        state = classical_gibbs_state(op, 1.0, 1)
        assert state.log_z == pytest.approx(np.log(2.0 * np.cosh(1.0)))

    def test_harris_bounds_collapse(self):
        state = classical_gibbs_state([0.0, 1.0, 2.0, 3.0], 1.0, 2)
        bounds = state.harris_bounds([1.0, -1.0, 0.5, 0.0])
        assert bounds.lower == bounds.duhamel == bounds.upper

    def test_nonpositive_beta(self):
        with pytest.raises(GibbsEngineError):
            classical_gibbs_state([0.0, 1.0], 0.0, 1)


class TestAsDiagonal:
    """Tests for diagonal-input coercion."""

    def test_off_diagonal_operator(self):
        op = ManyBodyOperator(1, 2, np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex), True)
        with pytest.raises(NonDiagonalError):
            as_diagonal(op)

    def test_matrix_input(self):
        with pytest.raises(NonDiagonalError):
            as_diagonal(np.eye(2))

    def test_complex_entries(self):
        with pytest.raises(NonDiagonalError):
            as_diagonal(np.array([1.0, 1.0j]))

    def test_real_valued_complex_dtype(self):
        assert as_diagonal(np.array([1.0 + 0j, -2.0 + 0j])).tolist() == [1.0, -2.0]


class TestPathEquivalence:
    """Classical sums against dense diagonalization on random Ising models."""

    @hypothesis_settings(max_examples=20, deadline=None)
    @given(
        energies=arrays(np.float64, 16, elements=st.floats(-3.0, 3.0)),
        observable=arrays(np.float64, 16, elements=st.floats(-1.0, 1.0)),
        beta=st.sampled_from([0.5, 1.0, 2.0]),
    )
    def test_arbitrary_diagonals(self, energies, observable, beta):
        dense_h = ManyBodyOperator(4, 2, np.diag(energies).astype(complex), True)
        dense = gibbs_state(diagonalize(dense_h), beta)
        classical = classical_gibbs_state(energies, beta, 4)
        dense_o = ManyBodyOperator(4, 2, np.diag(observable).astype(complex), True)
        assert classical.log_z == pytest.approx(dense.log_z, abs=1e-10)
        exact = expectation(dense, dense_o)
        assert classical.expectation(observable) == pytest.approx(exact, abs=1e-10)

    @pytest.mark.parametrize("n_sites", [2, 4, 6, pytest.param(10, marks=pytest.mark.slow)])
    def test_random_field_ising_chain(self, spin_half, n_sites):
        sites = SiteSet.chain(n_sites)
        catalog = ising_catalog(sites.nearest_neighbor_bonds(), GaussianCoupling()).extended(
            random_field_catalog(sites, GaussianCoupling(std=0.5))
        )
        template = build_template(catalog, sites, spin_half, dense=True)
        o_diag = order_diagonal(OrderOperatorSpec(), sites, spin_half)
        o_dense = build_order_operator(OrderOperatorSpec(), sites, spin_half)
        for index in range(2):
            sample = draw_sample(catalog, 21, index)
            dense = gibbs_state(diagonalize(template.dense(sample)), 1.3, n_sites)
            classical = classical_gibbs_state(template.diagonal(sample), 1.3, n_sites)
            exact = moments(dense, o_dense)
            fast = classical.moments(o_diag)
            assert classical.psi == pytest.approx(dense.psi, abs=1e-10)
            assert fast.mean == pytest.approx(exact.mean, abs=1e-10)
            assert fast.second_moment == pytest.approx(exact.second_moment, abs=1e-10)
            assert fast.duhamel == pytest.approx(exact.duhamel, abs=1e-10)

    @pytest.mark.slow
    def test_seeded_ising_instances_up_to_ten_sites(self):
        verdicts = VerdictLogger("equivalence")
        worst = check_classical_equivalence(verdicts, seed=5)
        record = verdicts.records[0]
        assert worst <= 1e-10
        assert record["outcome"] == "pass"
        assert record["details"]["instances"] == 20
        assert record["details"]["sizes"] == list(range(2, 11))
