"""Evaluation reports: schema, CSV mirrors, boxplot data and text summaries"""

import json
import logging
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from src.matrices import QMatrix, coverage_stats
from src.protocols import DIAGNOSTIC, ProtocolResult
from src.tools.validation import ConsistencyTable, ValidityTable, validity_summary

logger = logging.getLogger(__name__)

REPORT_VERSION = 1


class _Record(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class RunInfo(_Record):
    kind: str
    seeds: list[int]
    config_hash: str
    plan_hash: str | None = None
    dataset_digests: dict[str, str]
    checkpoint_digest: str | None = None
    degenerate_pair: bool = False


class AucRow(_Record):
    predictor: str
    model_id: str
    mean: float | None
    std: float | None
    n: int
    n_excluded: int


class AucOverall(_Record):
    predictor: str
    mean: float | None
    std: float | None
    n: int
    n_excluded: int
    margin: float | None = None  # diagnostic mean minus this predictor's mean


class ValidityRecord(_Record):
    dimension: str
    benchmark: str
    n_items: int
    rho: float | None
    p: float | None
    label: str


class ConsistencyRecord(_Record):
    dimension: str
    n_items_a: int
    n_items_b: int
    rho: float | None
    p: float | None


class CoverageRecord(_Record):
    benchmark: str
    ability_id: str
    count: int
    ratio: float


class EvalReport(_Record):
    """Deterministic payload of one evaluation; wall-clock times live in run_metadata.json"""

    version: int = REPORT_VERSION
    run: RunInfo
    auc: list[AucRow] = []
    auc_overall: list[AucOverall] = []
    heldout_counts: list[int] = []
    validity: list[ValidityRecord] = []
    validity_summary: dict = {}
    consistency: list[ConsistencyRecord] = []
    consistency_summary: dict = {}
    coverage: list[CoverageRecord] = []


def _clean(value):
    """NaN-free JSON number"""
    if value is None:
        return None
    value = float(value)
    return None if np.isnan(value) else value


def auc_tables(result: ProtocolResult) -> tuple[list[AucRow], list[AucOverall]]:
    rows, overall = [], []
    diag_mean = result.overall(DIAGNOSTIC)["mean"] if DIAGNOSTIC in result.aucs else None
    for predictor in result.predictors:
        for rec in result.per_model(predictor).to_dict("records"):
            rows.append(
                AucRow(
                    predictor=predictor,
                    model_id=rec["model_id"],
                    mean=_clean(rec["mean"]),
                    std=_clean(rec["std"]),
                    n=int(rec["n"]),
                    n_excluded=int(rec["n_excluded"]),
                )
            )
        stats = result.overall(predictor)
        margin = None
        if predictor != DIAGNOSTIC and diag_mean is not None and stats["mean"] is not None:
            margin = diag_mean - stats["mean"]
        overall.append(AucOverall(predictor=predictor, margin=margin, **stats))
    return rows, overall


def validity_records(table: ValidityTable) -> list[ValidityRecord]:
    return [
        ValidityRecord(
            dimension=r.dimension,
            benchmark=r.benchmark,
            n_items=r.n_items,
            rho=_clean(r.estimate.value),
            p=_clean(r.estimate.p_value),
            label=r.label,
        )
        for r in table.rows
    ]


def consistency_records(table: ConsistencyTable) -> list[ConsistencyRecord]:
    return [
        ConsistencyRecord(
            dimension=r.dimension,
            n_items_a=r.n_items_a,
            n_items_b=r.n_items_b,
            rho=_clean(r.estimate.value),
            p=_clean(r.estimate.p_value),
        )
        for r in table.rows
    ]


def coverage_records(q: QMatrix, benchmark: str) -> list[CoverageRecord]:
    return [
        CoverageRecord(benchmark=benchmark, ability_id=r["ability_id"], count=int(r["count"]), ratio=float(r["ratio"]))
        for r in coverage_stats(q).to_dict("records")
    ]


def build_report(
    run: RunInfo,
    result: ProtocolResult | None = None,
    validity: list[ValidityTable] = (),
    consistency: ConsistencyTable | None = None,
    coverage: dict[str, QMatrix] | None = None,
) -> EvalReport:
    fields = {"run": run}
    if result is not None:
        fields["auc"], fields["auc_overall"] = auc_tables(result)
        fields["heldout_counts"] = list(result.heldout_counts)
    if validity:
        merged = ValidityTable(tuple(row for table in validity for row in table.rows))
        fields["validity"] = validity_records(merged)
        fields["validity_summary"] = validity_summary(merged)
    if consistency is not None:
        fields["consistency"] = consistency_records(consistency)
        fields["consistency_summary"] = consistency.summary()
    if coverage:
        fields["coverage"] = [rec for name, q in coverage.items() for rec in coverage_records(q, name)]
    return EvalReport(**fields)


def report_json(report: EvalReport) -> str:
    return json.dumps(report.model_dump(mode="json"), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def boxplot_frame(report: EvalReport) -> pd.DataFrame:
    """Quartiles of per-model mean AUC for each predictor"""
    df = pd.DataFrame([r.model_dump() for r in report.auc])
    rows = []
    if df.empty:
        return pd.DataFrame(columns=["predictor", "n_models", "min", "q1", "median", "q3", "max", "mean"])
    for predictor, group in df.groupby("predictor", sort=False):
        means = group["mean"].dropna().to_numpy(dtype=np.float64)
        if means.size == 0:
            continue
        q1, median, q3 = np.quantile(means, [0.25, 0.5, 0.75])
        rows.append(
            {
                "predictor": predictor,
                "n_models": int(means.size),
                "min": float(means.min()),
                "q1": float(q1),
                "median": float(median),
                "q3": float(q3),
                "max": float(means.max()),
                "mean": float(means.mean()),
            }
        )
    return pd.DataFrame(rows, columns=["predictor", "n_models", "min", "q1", "median", "q3", "max", "mean"])


def _write_frame(records: list[BaseModel], path: Path, columns: list[str]) -> None:
    df = pd.DataFrame([r.model_dump() for r in records], columns=columns)
    df.to_csv(path, index=False, lineterminator="\n")


def write_report(
    report: EvalReport, out_dir, emit_plot_data: bool = False, started_at: datetime | None = None
) -> dict[str, Path]:
    """report.json plus CSV mirrors; timestamps go to run_metadata.json only"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"report": out_dir / "report.json"}
    paths["report"].write_text(report_json(report), encoding="utf-8")

    if report.auc:
        paths["auc"] = out_dir / "auc.csv"
        _write_frame(report.auc, paths["auc"], list(AucRow.model_fields))
        paths["auc_overall"] = out_dir / "auc_overall.csv"
        _write_frame(report.auc_overall, paths["auc_overall"], list(AucOverall.model_fields))
    if report.validity:
        paths["validity"] = out_dir / "validity.csv"
        df = pd.DataFrame([r.model_dump() for r in report.validity]).rename(
            columns={"label": "class"}
        )
        df.to_csv(paths["validity"], index=False, lineterminator="\n")
    if report.consistency:
        paths["consistency"] = out_dir / "consistency.csv"
        _write_frame(report.consistency, paths["consistency"], list(ConsistencyRecord.model_fields))
    if report.coverage:
        paths["coverage"] = out_dir / "coverage.csv"
        _write_frame(report.coverage, paths["coverage"], list(CoverageRecord.model_fields))
    if emit_plot_data and report.auc:
        paths["boxplot"] = out_dir / "auc_boxplot.csv"
        boxplot_frame(report).to_csv(paths["boxplot"], index=False, lineterminator="\n")

    finished_at = datetime.now(timezone.utc)
    metadata = {
        "started_at": (started_at or finished_at).isoformat(),
        "finished_at": finished_at.isoformat(),
        "files": sorted(p.name for p in paths.values()),
    }
    paths["metadata"] = out_dir / "run_metadata.json"
    paths["metadata"].write_text(json.dumps(metadata, indent=2) + "\n", encoding="utf-8")
    logger.info("Wrote %d report files to %s", len(paths), out_dir)
    return paths


def _fmt(value: float | None, spec: str = ".4f") -> str:
    return "n/a" if value is None else format(value, spec)


def summary_lines(report: EvalReport) -> list[str]:
    """Markdown-style digest of a report for terminal output"""
    lines = [f"## Evaluation ({report.run.kind})", ""]
    if report.run.degenerate_pair:
        lines += ["**Warning:** degenerate pair (source and target are the same dataset)", ""]

    if report.auc_overall:
        lines.append("### AUC (per model, over repeats)")
        for row in report.auc_overall:
            line = f"- {row.predictor}: {_fmt(row.mean)} ± {_fmt(row.std)} (n={row.n}"
            line += f", excluded {row.n_excluded})" if row.n_excluded else ")"
            if row.margin is not None:
                line += f", diagnostic margin {row.margin:+.4f}"
            lines.append(line)
        lines.append("")

    if report.validity:
        counts = report.validity_summary.get("class_counts", {})
        lines.append("### Criterion validity")
        lines.append("- " + ", ".join(f"{name}: {n}" for name, n in counts.items()))
        share = report.validity_summary.get("share_moderate_or_strong")
        if share is not None:
            lines.append(f"- moderate or strong on covered dimensions: {share * 100:.1f}%")
        lines.append("")

    if report.consistency_summary:
        s = report.consistency_summary
        lines.append("### Consistency")
        lines.append(
            f"- eligible dimensions: {s['eligible_dimensions']}, median rho {_fmt(s['median_rho'], '.3f')}, "
            f"rho > 0.5 on {s['above_0_5']}"
        )
        if s.get("reason"):
            lines.append(f"- {s['reason']}")
        lines.append("")
    return lines
