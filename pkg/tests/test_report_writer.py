"""
Tests for CSV/JSON report rendering and atomic writes.
"""

import json

import pandas as pd
import pytest

from app.core.provenance import atomic_write_text, generate_config_hash
from app.models.reports import (
    CommutativityRow,
    ReplicaSymmetryRow,
    RSBPoint,
    RSBReport,
    StudyResult,
)
from app.services.ensemble_driver import run_concentration_study
from app.services.report_writer import (
    BASE_COLUMNS,
    REPLICA_COLUMNS,
    render_csv,
    render_json,
    result_frame,
    result_rows,
    write_reports,
)

pytestmark = pytest.mark.unit


@pytest.fixture
def concentration_result(independent_sites_config) -> StudyResult:
    run = run_concentration_study(independent_sites_config)
    return StudyResult(
        study="independent",
        kind="concentration",
        config_hash="abc123",
        master_seed=5,
        beta=1.0,
        size_points=run.reports,
    )


@pytest.fixture
def replica_result() -> StudyResult:
    point = RSBPoint(
        n=3, lam=0.0, mean_r=0.1, mean_r_se=0.01, gibbs_term=0.2, gibbs_term_se=0.02,
        sample_term=0.1, sample_term_se=0.01, total=0.3, total_se=0.03, additivity_ok=True,
        ratio=2.0 / 3.0, ratio_se=0.05,
    )
    rsb = RSBReport(n_replicas=2, overlap_spec="z:bonds:1-2:1R^1", path="classical",
                    c_r={3: 0.0625}, points=[point])
    return StudyResult(study="sk", kind="replica", beta=2.0, rsb=rsb)


class TestRows:
    """Tests for long-format rows."""

    def test_size_point_quantities(self, concentration_result):
        frame = result_frame(concentration_result)
        assert list(frame.columns) == BASE_COLUMNS
        assert len(frame) == 3 * 8
        var_psi = frame[frame["quantity"] == "var_psi"]
        assert (var_psi["bound"] == 0.0).all()
        assert str(frame["N"].dtype) == "Int64"
        assert set(frame["config_hash"]) == {"abc123"}

    def test_replica_columns(self, replica_result):
        frame = result_frame(replica_result)
        assert list(frame.columns) == BASE_COLUMNS + REPLICA_COLUMNS
        mean_r = frame[frame["quantity"] == "mean_r"].iloc[0]
        assert mean_r["bound"] == pytest.approx(0.0625)
        total = frame[frame["quantity"] == "total"].iloc[0]
        assert total["ratio"] == pytest.approx(2.0 / 3.0)
        assert set(frame["n_replicas"]) == {2}

    def test_symmetry_rows(self, replica_result):
        replica_result.rsb.symmetry.append(
            ReplicaSymmetryRow(n=3, hamiltonian_defect=0.0, expectation_defect=1e-16)
        )
        frame = result_frame(replica_result)
        defects = frame[frame["quantity"].str.endswith("_defect")]
        assert list(defects["quantity"]) == ["hamiltonian_defect", "expectation_defect"]
        assert set(defects["N"]) == {3}

    def test_commutativity_rows_carry_gap(self):
        row = CommutativityRow(n=2, value_at_zero=0.0, value_at_zero_se=0.0,
                               limit_plus=0.01, gap_plus=0.01, gap=0.01)
        result = StudyResult(study="trivial", kind="commutativity", commutativity=[row])
        rows = result_rows(result)
        assert [r["quantity"] for r in rows] == [
            "value_at_zero", "limit_plus", "limit_minus", "gap_plus", "gap_minus"
        ]
        assert all(r["gap"] == 0.01 for r in rows)


class TestRendering:
    """Tests for CSV and JSON rendering."""

    def test_csv_is_deterministic(self, independent_sites_config, concentration_result):
        again = StudyResult(
            study="independent", kind="concentration", config_hash="abc123", master_seed=5,
            beta=1.0, size_points=run_concentration_study(independent_sites_config).reports,
        )
        assert render_csv(concentration_result) == render_csv(again)

    def test_csv_header(self, concentration_result):
        header = render_csv(concentration_result).splitlines()[0]
        assert header == ",".join(BASE_COLUMNS)

    def test_json_round_trip(self, replica_result):
        data = json.loads(render_json(replica_result))
        assert data["kind"] == "replica"
        assert StudyResult.model_validate(data) == replica_result


class TestWriting:
    """Tests for write_reports and atomic writes."""

    def test_writes_both_files(self, tmp_path, concentration_result):
        paths = write_reports(concentration_result, tmp_path / "out")
        assert [p.name for p in paths] == [
            "independent_concentration.csv", "independent_concentration.json"
        ]
        frame = pd.read_csv(paths[0])
        assert list(frame.columns) == BASE_COLUMNS
        assert sorted(p.name for p in (tmp_path / "out").iterdir()) == sorted(p.name for p in paths)

    def test_json_only(self, tmp_path, concentration_result):
        paths = write_reports(concentration_result, tmp_path, csv=False)
        assert [p.suffix for p in paths] == [".json"]

    def test_atomic_write_replaces(self, tmp_path):
        target = tmp_path / "report.csv"
        atomic_write_text(target, "first\n")
        atomic_write_text(target, "second\n")
        assert target.read_text() == "second\n"
        assert [p.name for p in tmp_path.iterdir()] == ["report.csv"]

    def test_config_hash_ignores_key_order(self):
        assert generate_config_hash({"a": 1, "b": 2}) == generate_config_hash({"b": 2, "a": 1})
