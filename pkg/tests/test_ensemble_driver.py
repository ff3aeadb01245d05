"""
Integration tests for the ensemble driver.

Uncoupled sites give closed forms at every size: every sample is the same,
<O> = tanh(beta lambda / 2) / 2 and the total variance of O equals its Gibbs
variance sech^2(beta lambda / 2) / (4N), so the size trend has slope -1.
"""

import numpy as np
import pytest

from app.core.config import settings
from app.core.statistics import loglog_slope
from app.models.reports import FailedSample
from app.services.ensemble_driver import (
    StudyAbortedError,
    StudyError,
    evaluate_sample,
    lemma1_bound,
    prepare_size,
    run_assumption_diagnostics,
    run_concentration_study,
    run_lambda_sweep,
    run_samples,
    run_theorem_study,
    split_outcomes,
)
from app.utils.logging import VerdictLogger

pytestmark = pytest.mark.integration


class TestSampleScheduling:
    """Tests for run_samples and split_outcomes."""

    @pytest.mark.parametrize("threads", [1, 3])
    def test_results_in_index_order(self, threads):
        assert run_samples(lambda i: i * i, 6, threads) == [0, 1, 4, 9, 16, 25]

    def test_exceptions_returned_in_slot(self):
        def work(index):
            if index == 2:
                raise ValueError("bad sample")
            return index

        results = run_samples(work, 4, threads=2)
        assert isinstance(results[2], ValueError)
        assert results[3] == 3

    def test_single_failure_within_limit(self):
        results = list(range(199)) + [RuntimeError("eigh did not converge")]
        good, failed = split_outcomes(results, n_sites=4, master_seed=1)
        assert len(good) == 199
        assert len(failed) == 1
        assert isinstance(failed[0], FailedSample)
        assert failed[0].sample_index == 199
        assert failed[0].n == 4

    def test_failure_limit_aborts(self):
        results = list(range(9)) + [RuntimeError("boom")]
        with pytest.raises(StudyAbortedError):
            split_outcomes(results, n_sites=2, master_seed=1)

    def test_too_few_successes_abort(self):
        with pytest.raises(StudyAbortedError):
            split_outcomes([0], n_sites=2, master_seed=1)


class TestSizeContext:
    """Tests for per-size preparation."""

    def test_diagonal_model_takes_classical_path(self, ising_field_config):
        ctx = prepare_size(ising_field_config, 4)
        assert ctx.classical
        assert ctx.order_diag.shape == (16,)
        assert ctx.c_o == pytest.approx(0.5)

    def test_heisenberg_is_dense(self, heisenberg_config):
        ctx = prepare_size(heisenberg_config, 3)
        assert not ctx.classical
        assert ctx.c_phi == pytest.approx(0.75)
        assert ctx.sigma_squared == pytest.approx(2.0 / 3.0)

    def test_sample_is_reproducible(self, heisenberg_config):
        ctx = prepare_size(heisenberg_config, 3)
        first = evaluate_sample(ctx, 5, 2, 1.0, [0.0, 0.3])
        second = evaluate_sample(ctx, 5, 2, 1.0, [0.0, 0.3])
        assert np.array_equal(first.psi, second.psi)
        assert np.array_equal(first.mean, second.mean)

    def test_lemma1_bound(self):
        assert lemma1_bound(2.0, 0.75, 1.0, 3) == pytest.approx(2 * 4 * 0.5625 / 3)


class TestConcentrationStudy:
    """Tests for run_concentration_study."""

    def test_uncoupled_sites_closed_forms(self, independent_sites_config):
        run = run_concentration_study(independent_sites_config)
        beta, lam = 1.0, 0.5
        assert [p.n for p in run.reports] == [1, 2, 4]
        for point in run.reports:
            assert point.mean_psi == pytest.approx(np.log(2.0 * np.cosh(beta * lam / 2.0)))
            assert point.var_psi == pytest.approx(0.0, abs=1e-24)
            assert point.mean_order == pytest.approx(0.5 * np.tanh(beta * lam / 2.0))
            expected = 0.25 / np.cosh(beta * lam / 2.0) ** 2 / point.n
            assert point.var_order_total == pytest.approx(expected)
            assert point.var_order_gibbs == pytest.approx(expected)
            assert point.var_order_sample == pytest.approx(0.0, abs=1e-24)
            assert not point.bound_exceeded
        assert run.failed == []

    def test_heisenberg_respects_bound(self, heisenberg_config):
        verdicts = VerdictLogger("concentration")
        run = run_concentration_study(heisenberg_config, verdicts=verdicts)
        assert not any(p.bound_exceeded for p in run.reports)
        assert all(p.assumption2_max == pytest.approx(0.0, abs=1e-10) for p in run.reports)
        assert {r["check"] for r in verdicts.records} == {"lemma1_bound", "variance_additivity"}
        assert verdicts.all_passed()

    def test_threads_do_not_change_results(self, heisenberg_config):
        serial = run_concentration_study(heisenberg_config, threads=1)
        pooled = run_concentration_study(heisenberg_config, threads=2)
        assert [p.model_dump() for p in serial.reports] == [p.model_dump() for p in pooled.reports]

    def test_sizes_share_samples(self, heisenberg_config, make_config):
        shorter = make_config(
            name="heisenberg", size_ladder=[2], lambda_grid=[0.3], samples_per_size=12,
            model={"coupling": "heisenberg"},
        )
        full = run_concentration_study(heisenberg_config)
        prefix = run_concentration_study(shorter)
        assert prefix.reports[0].model_dump() == full.reports[0].model_dump()


class TestTheoremStudy:
    """Tests for run_theorem_study."""

    def test_uncoupled_slope_is_minus_one(self, independent_sites_config):
        verdicts = VerdictLogger("theorem")
        run, trend = run_theorem_study(independent_sites_config, verdicts=verdicts)
        assert len(trend) == 1
        assert trend[0].slope == pytest.approx(-1.0)
        assert trend[0].passed
        assert trend[0].threshold == settings.TREND_SLOPE_THRESHOLD
        assert verdicts.all_passed()

    def test_zero_lambda_rejected(self, make_config):
        config = make_config(lambda_grid=[0.0, 0.5], model={"coupling": "none"})
        with pytest.raises(StudyError):
            run_theorem_study(config)


class TestLambdaSweep:
    """Tests for run_lambda_sweep on a random-field Ising ring."""

    def test_sweep_identities(self, ising_field_config):
        verdicts = VerdictLogger("sweep")
        report, failed = run_lambda_sweep(ising_field_config, verdicts=verdicts)
        assert failed == []
        assert report.convex
        assert report.monotone
        assert report.derivatives_agree
        assert len(report.rows) == 2 * 5
        assert all(row.integral_bound > 0 for row in report.integrals)
        assert all(row.within_bound for row in report.integrals)
        assert verdicts.all_passed()

    def test_interior_rows_carry_derivatives(self, ising_field_config):
        report, _ = run_lambda_sweep(ising_field_config)
        edges = [row for row in report.rows if row.lam in (0.0, 0.004)]
        interior = [row for row in report.rows if row.lam not in (0.0, 0.004)]
        assert all(row.order_derivative is None for row in edges)
        assert all(row.order_derivative is not None for row in interior)

    def test_integral_matches_increment(self, ising_field_config):
        report, _ = run_lambda_sweep(ising_field_config)
        whole = [r for r in report.integrals if r.lam_lo == 0.0 and r.lam_hi == 0.004]
        assert len(whole) == 2
        for row in whole:
            assert row.integrated_duhamel == pytest.approx(row.order_increment, rel=1e-3)


class TestAssumptionDiagnostics:
    """Tests for run_assumption_diagnostics."""

    def test_rows_per_size(self, heisenberg_config):
        rows, failed = run_assumption_diagnostics(heisenberg_config)
        assert [row.n for row in rows] == [2, 3, 4]
        assert rows[0].p_increment is None
        assert all(row.p_increment is not None for row in rows[1:])
        assert all(row.order_side_lam == 0.3 for row in rows)
        assert all(row.fluctuation_side >= 0.0 for row in rows)
        assert failed == []

    def test_transverse_order_has_nonzero_commutator(self, make_config):
        config = make_config(
            size_ladder=[2, 3],
            lambda_grid=[0.2],
            model={"coupling": "ising", "order": {"axis": "x"}},
        )
        rows, _ = run_assumption_diagnostics(config)
        assert all(row.assumption2_max > 0.0 for row in rows)

    def test_staggered_order_decays_like_inverse_size(self, make_config):
        config = make_config(
            size_ladder=[2, 4, 6, 8],
            lambda_grid=[0.2],
            samples_per_size=2,
            model={
                "coupling": "heisenberg",
                "distribution": {"kind": "constant", "value": 1.0},
                "order": {"weights": "staggered"},
            },
        )
        rows, failed = run_assumption_diagnostics(config)
        sizes = np.array([row.n for row in rows])
        norms = np.array([row.assumption2_max for row in rows])
        # [O, [H, O]] = -(4 / N^2) sum_b (S^x S^x + S^y S^y): an open XX chain
        exact = np.array([
            4.0 / n ** 2 * sum(np.cos(np.pi * k / (n + 1)) for k in range(1, n // 2 + 1))
            for n in sizes
        ])
        assert norms == pytest.approx(exact, rel=1e-10)
        assert np.all(sizes * norms <= 4.0 / np.pi)
        assert np.array([row.assumption2_scaled for row in rows]) == pytest.approx(sizes * norms)
        assert loglog_slope(sizes, norms).slope <= -0.8
        assert failed == []
