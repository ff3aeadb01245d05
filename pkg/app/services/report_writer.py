"""
Report Writer Service

Flattens a StudyResult into the long-format CSV table and writes it, together
with the full JSON report, through atomic renames.

CSV columns:
    study, N, lambda, beta, quantity, estimate, std_error, bound, seed, config_hash
Replica studies append:
    n_replicas, overlap_spec, gap, ratio
"""

from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import pandas as pd

from app.core.provenance import atomic_write_text
from app.models.reports import StudyResult
from app.utils.logging import get_logger

logger = get_logger(__name__)

BASE_COLUMNS = [
    "study", "N", "lambda", "beta", "quantity", "estimate", "std_error", "bound", "seed",
    "config_hash",
]
REPLICA_COLUMNS = ["n_replicas", "overlap_spec", "gap", "ratio"]
REPLICA_KINDS = ("replica", "commutativity")

FLOAT_FORMAT = "%.12g"


def _row(
    result: StudyResult,
    n: Optional[int],
    lam: Optional[float],
    quantity: str,
    estimate: Optional[float],
    std_error: Optional[float] = None,
    bound: Optional[float] = None,
    **replica: Any,
) -> Dict[str, Any]:
    row = {
        "study": result.study,
        "N": n,
        "lambda": lam,
        "beta": result.beta,
        "quantity": quantity,
        "estimate": estimate,
        "std_error": std_error,
        "bound": bound,
        "seed": result.master_seed,
        "config_hash": result.config_hash,
    }
    row.update(replica)
    return row


def result_rows(result: StudyResult) -> List[Dict[str, Any]]:
    """
    Long-format rows of every quantity in a result, in report order.

    Examples:
        >>> result_rows(StudyResult(study="empty", kind="algebra"))
        []
    """
    rows: List[Dict[str, Any]] = []

    for p in result.size_points:
        rows.extend([
            _row(result, p.n, p.lam, "mean_psi", p.mean_psi, p.mean_psi_se),
            _row(result, p.n, p.lam, "var_psi", p.var_psi, p.var_psi_se, p.lemma1_bound),
            _row(result, p.n, p.lam, "mean_order", p.mean_order, p.mean_order_se),
            _row(result, p.n, p.lam, "var_order_total", p.var_order_total, p.var_order_total_se),
            _row(result, p.n, p.lam, "var_order_gibbs", p.var_order_gibbs, p.var_order_gibbs_se),
            _row(result, p.n, p.lam, "var_order_sample", p.var_order_sample, p.var_order_sample_se),
            _row(result, p.n, p.lam, "assumption2_mean", p.assumption2_mean),
            _row(result, p.n, p.lam, "assumption2_max", p.assumption2_max),
        ])

    for v in result.verdicts:
        rows.append(_row(result, None, v.lam, f"slope:{v.quantity}", v.slope, v.slope_se, v.threshold))

    if result.sweep is not None:
        for s in result.sweep.rows:
            rows.extend([
                _row(result, s.n, s.lam, "mean_order", s.mean_order, s.mean_order_se),
                _row(result, s.n, s.lam, "mean_psi", s.mean_psi, s.mean_psi_se),
                _row(result, s.n, s.lam, "duhamel_slope", s.duhamel_slope, s.duhamel_slope_se),
            ])
            if s.order_derivative is not None:
                rows.append(_row(result, s.n, s.lam, "order_derivative", s.order_derivative))
                rows.append(_row(result, s.n, s.lam, "psi_derivative", s.psi_derivative))
        for i in result.sweep.integrals:
            label = f"[{i.lam_lo:g},{i.lam_hi:g}]"
            n_beta = i.n * (result.beta or 1.0)
            rows.append(_row(result, i.n, i.lam_hi, f"order_increment{label}", i.order_increment))
            rows.append(
                _row(result, i.n, i.lam_hi, f"integrated_duhamel{label}", i.integrated_duhamel,
                     bound=i.integral_bound * n_beta)
            )

    for a in result.assumptions:
        rows.extend([
            _row(result, a.n, 0.0, "assumption2_mean", a.assumption2_mean),
            _row(result, a.n, 0.0, "assumption2_max", a.assumption2_max),
            _row(result, a.n, 0.0, "assumption2_scaled", a.assumption2_scaled),
            _row(result, a.n, 0.0, "p_n", a.p_n, a.p_n_se),
            _row(result, a.n, 0.0, "p_increment", a.p_increment),
            _row(result, a.n, 0.0, "fluctuation_side", a.fluctuation_side),
        ])
        if a.order_side is not None:
            rows.append(_row(result, a.n, a.order_side_lam, "order_side", a.order_side))

    if result.rsb is not None:
        replica = {"n_replicas": result.rsb.n_replicas, "overlap_spec": result.rsb.overlap_spec}
        for r in result.rsb.points:
            bound = result.rsb.c_r.get(r.n)
            rows.extend([
                _row(result, r.n, r.lam, "mean_r", r.mean_r, r.mean_r_se, bound, **replica),
                _row(result, r.n, r.lam, "gibbs_term", r.gibbs_term, r.gibbs_term_se, **replica),
                _row(result, r.n, r.lam, "sample_term", r.sample_term, r.sample_term_se, **replica),
                _row(result, r.n, r.lam, "total", r.total, r.total_se, ratio=r.ratio, **replica),
            ])
        for s in result.rsb.symmetry:
            rows.extend([
                _row(result, s.n, 0.0, "hamiltonian_defect", s.hamiltonian_defect, **replica),
                _row(result, s.n, 0.0, "expectation_defect", s.expectation_defect, **replica),
            ])
        for g in result.gg_ratio:
            rows.append(
                _row(result, g.n, 0.0, "gg_ratio", g.ratio, g.ratio_se, 2.0 / 3.0,
                     ratio=g.ratio, **replica)
            )

    for c in result.commutativity:
        common = {"gap": c.gap}
        rows.extend([
            _row(result, c.n, 0.0, "value_at_zero", c.value_at_zero, c.value_at_zero_se, **common),
            _row(result, c.n, 0.0, "limit_plus", c.limit_plus, c.limit_plus_se, **common),
            _row(result, c.n, 0.0, "limit_minus", c.limit_minus, c.limit_minus_se, **common),
            _row(result, c.n, 0.0, "gap_plus", c.gap_plus, c.gap_plus_se, **common),
            _row(result, c.n, 0.0, "gap_minus", c.gap_minus, c.gap_minus_se, **common),
        ])

    return rows


def result_frame(result: StudyResult) -> pd.DataFrame:
    """CSV table of a result with the fixed column order."""
    columns = BASE_COLUMNS + (REPLICA_COLUMNS if result.kind in REPLICA_KINDS else [])
    frame = pd.DataFrame(result_rows(result), columns=columns)
    frame["N"] = frame["N"].astype("Int64")
    return frame


def render_csv(result: StudyResult) -> str:
    return result_frame(result).to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def render_json(result: StudyResult) -> str:
    return result.model_dump_json(indent=2) + "\n"


def write_reports(
    result: StudyResult,
    out_dir: Union[str, Path],
    csv: bool = True,
    json: bool = True,
) -> List[Path]:
    """
    Write ``<study>_<kind>.csv`` and ``<study>_<kind>.json`` atomically.

    Returns:
        Paths written, CSV first
    """
    directory = Path(out_dir)
    stem = f"{result.study}_{result.kind}"
    written = []
    if csv:
        written.append(atomic_write_text(directory / f"{stem}.csv", render_csv(result)))
    if json:
        written.append(atomic_write_text(directory / f"{stem}.json", render_json(result)))
    logger.info("Wrote reports", extra={"study": result.study, "files": [str(p) for p in written]})
    return written
