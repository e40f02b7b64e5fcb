"""Ingestion, the human-vs-simulated comparison report, and its serialization."""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, stats
from .cfa import CfaFit, build_ffm_spec, build_tfm_spec, fit_ml, sample_covariance
from .congruence import compare_fits
from .criterion import CriterionSpec, criterion_correlations
from .errors import CsvError, HeaderError, PsyEvalError, RangeError
from .pca import fit_pca2, project
from .scale import (
    LEVELS,
    Coding,
    MissingPolicy,
    ResponseMatrix,
    ScaleSpec,
    ScoredSample,
    apply_reverse_coding,
    score,
)

DECISIONS = {
    "sd_denominator": "n-1",
    "skew_kurtosis": "biased central moments, excess kurtosis",
    "rmsea": "sqrt(max((chi2-df)/(df*(N-1)), 0))",
    "srmr": "correlation-metric residuals, lower triangle incl. diagonal",
    "chi2": "(N-1)*F_ML",
    "cfa_parameterization": "factor variances fixed to 1, log error variances, free factor correlations",
    "pca": "covariance PCA centered on human means, no scaling",
    "loading_mae": "pattern-active loadings only",
    "tcc": "no sign alignment; factors matched by position",
    "average_r": "mean of per-domain r",
    "missing_data": "listwise deletion unless configured",
}


def undefined(reason: str) -> dict:
    return {"undefined": reason}


def num(x, reason: str = "non-finite"):
    if x is None:
        return undefined(reason)
    x = float(x)
    return x if math.isfinite(x) else undefined(reason)


def _reason(exc: Exception) -> str:
    name = type(exc).__name__
    return {
        "DegenerateInputError": "zero-variance",
        "InsufficientDataError": "insufficient-data",
        "PdError": "not-positive-definite",
        "RankError": "rank-deficient",
        "ZeroVectorError": "zero-loadings",
    }.get(name, name)


# ---------------------------------------------------------------- ingestion


def _read_csv(path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = [r for r in reader if r]
    except (OSError, csv.Error, UnicodeDecodeError) as exc:
        raise CsvError(f"cannot read {path}: {exc}") from exc
    if not header:
        raise HeaderError(f"{path}: empty file")
    return [h.strip() for h in header], rows


def _parse_cell(text: str, row: int, column: str) -> float:
    text = text.strip()
    if text == "" or text.upper() == "NA":
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise CsvError(f"row {row}, {column}: non-numeric value {text!r}") from None


def _load_columns(path, columns: Sequence[str], lo: int, hi: int):
    header, rows = _read_csv(path)
    missing = [c for c in columns if c not in header]
    if missing:
        raise HeaderError(f"{path}: missing columns {', '.join(missing[:5])}")
    pos = [header.index(c) for c in columns]
    id_col = next((header.index(k) for k in ("id", "ID", "subject_id") if k in header), None)
    ids, values = [], np.empty((len(rows), len(columns)))
    for r, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise CsvError(f"{path}: row {r} has {len(row)} fields, header has {len(header)}")
        ids.append(row[id_col].strip() if id_col is not None else str(r))
        for c, (p, name) in enumerate(zip(pos, columns)):
            v = _parse_cell(row[p], r, name)
            if not math.isnan(v) and not lo <= v <= hi:
                raise RangeError(f"row {r}, {name}: {v:g} outside {lo}..{hi}", row=r, column=name)
            values[r - 1, c] = v
    return ids, values


def load_responses(path, spec: ScaleSpec, coding: Coding = Coding.RAW) -> ResponseMatrix:
    cols = [f"Item{i}" for i in spec.item_ids]
    ids, values = _load_columns(path, cols, spec.likert.min, spec.likert.max)
    return ResponseMatrix(tuple(ids), spec.item_ids, values, coding, spec.likert)


def load_criterion(path, spec: CriterionSpec) -> ResponseMatrix:
    ids, values = _load_columns(path, list(spec.columns), spec.likert.min, spec.likert.max)
    return ResponseMatrix(tuple(ids), spec.item_ids, values, Coding.REVERSE_APPLIED, spec.likert)


# ---------------------------------------------------------------- comparison


@dataclass(frozen=True)
class CompareOptions:
    missing_policy: MissingPolicy = MissingPolicy.LISTWISE_DELETE
    label: str = "simulated"
    seeds: dict = field(default_factory=dict)
    include_pca_coords: bool = True


@dataclass
class ComparisonReport:
    data: dict

    def to_json(self) -> str:
        return canonical_json(self.data)

    def __getitem__(self, key):
        return self.data[key]


def _prepare(matrix: ResponseMatrix, spec: ScaleSpec, policy) -> ScoredSample:
    if matrix.coding is Coding.RAW:
        matrix = apply_reverse_coding(matrix, spec)
    return score(matrix, spec, policy)


def _describe_block(labels, human, sim) -> dict:
    def side(grid):
        rows = []
        for j in range(grid.shape[1]):
            col = grid[:, j]
            col = col[~np.isnan(col)]
            try:
                d = stats.describe(col)
            except PsyEvalError as exc:
                rows.append({k: undefined(_reason(exc)) for k in ("mu", "sigma", "skewness", "excess_kurtosis")})
                continue
            rows.append(
                {
                    "mu": num(d.mu),
                    "sigma": num(d.sigma),
                    "skewness": num(d.skewness, "zero-variance"),
                    "excess_kurtosis": num(d.excess_kurtosis, "zero-variance"),
                }
            )
        return rows

    h, s = side(human), side(sim)
    block = {"units": list(labels), "human": h, "simulated": s}
    mu_h = np.array([r["mu"] if isinstance(r["mu"], float) else np.nan for r in h])
    mu_s = np.array([r["mu"] if isinstance(r["mu"], float) else np.nan for r in s])
    sd_h = np.array([r["sigma"] if isinstance(r["sigma"], float) else np.nan for r in h])
    sd_s = np.array([r["sigma"] if isinstance(r["sigma"], float) else np.nan for r in s])
    ok = ~(np.isnan(mu_h) | np.isnan(mu_s))
    block["mu_mae"] = num(stats.mae(mu_h[ok], mu_s[ok])) if ok.any() else undefined("insufficient-data")
    ok = ~(np.isnan(sd_h) | np.isnan(sd_s))
    block["sigma_mae"] = num(stats.mae(sd_h[ok], sd_s[ok])) if ok.any() else undefined("insufficient-data")
    try:
        block["hai"] = num(stats.hai(sd_h[ok], sd_s[ok]))
    except PsyEvalError as exc:
        block["hai"] = undefined(_reason(exc))
    return block


def _alpha_cells(spec: ScaleSpec, sample: ScoredSample) -> dict:
    col = {i: k for k, i in enumerate(sample.item_ids)}
    out = {}
    for unit in list(spec.facets) + list(spec.domains):
        grid = sample.item_scores[:, [col[i] for i in unit.item_ids]]
        grid = grid[~np.isnan(grid).any(axis=1)]
        try:
            out[unit.name] = num(stats.cronbach_alpha(grid))
        except PsyEvalError as exc:
            out[unit.name] = undefined(_reason(exc))
    return out


def _fit_summary(fit: CfaFit) -> dict:
    spec = fit.spec
    iu = np.triu_indices(spec.m, 1)
    return {
        "converged": fit.converged,
        "iterations": fit.iterations,
        "warnings": [w.value for w in fit.warnings],
        "F_ml": num(fit.F_ml),
        "chi2": num(fit.chi2),
        "df": fit.df,
        "cfi": num(fit.cfi, "undefined-baseline"),
        "tli": num(fit.tli, "zero-df"),
        "rmsea": num(fit.rmsea, "zero-df"),
        "srmr": num(fit.srmr),
        "loadings": {
            name: {"factor": spec.factor_names[f], "loading": num(fit.loadings_std[i, f])}
            for i, (name, f) in enumerate(zip(spec.indicator_names, spec.factor_of))
        },
        "factor_corr": {
            f"{spec.factor_names[a]}~{spec.factor_names[b]}": num(fit.factor_corr[a, b])
            for a, b in zip(*iu)
        },
    }


def _fit_or_reason(grid, spec):
    grid = grid[~np.isnan(grid).any(axis=1)]
    try:
        return fit_ml(sample_covariance(grid, spec.indicator_names), spec), None
    except PsyEvalError as exc:
        return None, _reason(exc)


def _structural_block(scale: ScaleSpec, human: ScoredSample, sim: ScoredSample) -> dict:
    models = []
    for domain in scale.domains:
        spec = build_tfm_spec(domain, scale)
        cols = [human.item_ids.index(int(n[4:])) for n in spec.indicator_names]
        models.append((f"TFM:{domain.name}", spec, human.item_scores[:, cols], sim.item_scores[:, cols]))
    if len(scale.domains) >= 2 and all(len(d.facet_names) >= 2 for d in scale.domains):
        spec = build_ffm_spec(scale)
        models.append(("FFM", spec, human.facet_scores, sim.facet_scores))

    block = {}
    for name, spec, gh, gs in models:
        fit_h, why_h = _fit_or_reason(gh, spec)
        fit_s, why_s = _fit_or_reason(gs, spec)
        entry = {
            "human": _fit_summary(fit_h) if fit_h else undefined(why_h),
            "simulated": _fit_summary(fit_s) if fit_s else undefined(why_s),
        }
        if fit_h and fit_s:
            cmp = compare_fits(fit_h, fit_s)
            entry["congruence"] = {
                row.factor: {
                    "tcc": num(row.phi, "zero-loadings"),
                    "band": row.band.value if row.band else undefined("zero-loadings"),
                    "loading_mae": num(row.loading_mae),
                }
                for row in cmp.per_factor
            }
            iu = np.triu_indices(spec.m, 1)
            entry["factor_corr_delta"] = {
                f"{spec.factor_names[a]}~{spec.factor_names[b]}": num(fit_s.factor_corr[a, b] - fit_h.factor_corr[a, b])
                for a, b in zip(*iu)
            }
        else:
            entry["congruence"] = undefined("fit-failed")
        block[name] = entry
    return block


def _discriminant_block(human: ScoredSample, sim: ScoredSample) -> dict:
    out = {"units": list(human.domain_names)}
    for key, sample in (("human", human), ("simulated", sim)):
        try:
            corr = stats.correlation_matrix(sample.domain_scores, sample.domain_names)
            out[key] = {
                "corr": [[num(v) for v in row] for row in corr],
                "mean_abs": num(stats.discriminant_mean_abs(corr)),
            }
        except PsyEvalError as exc:
            out[key] = undefined(_reason(exc))
    return out


def _similarity_block(human_in: ResponseMatrix, sim_in: ResponseMatrix, human: ScoredSample, sim: ScoredSample) -> dict:
    if set(human_in.subject_ids) != set(sim_in.subject_ids) or len(set(human_in.subject_ids)) != len(human_in.subject_ids):
        return {"status": "unpaired"}
    pos = {s: k for k, s in enumerate(sim.subject_ids)}
    common = [s for s in human.subject_ids if s in pos]
    hr = [human.subject_ids.index(s) for s in common]
    sr = [pos[s] for s in common]
    domains, rs = {}, []
    for j, name in enumerate(human.domain_names):
        x, y = sim.domain_scores[sr, j], human.domain_scores[hr, j]
        cell = {"n": len(common)}
        try:
            cell["mae"] = num(stats.mae(x, y))
        except PsyEvalError as exc:
            cell["mae"] = undefined(_reason(exc))
        try:
            r = stats.pearson_r(x, y)
            cell["r"] = num(r)
            rs.append(r)
        except PsyEvalError as exc:
            cell["r"] = undefined(_reason(exc))
        domains[name] = cell
    return {
        "status": "paired",
        "domains": domains,
        "mean_r": num(float(np.mean(rs))) if rs else undefined("no-defined-r"),
    }


def _pca_block(human: ScoredSample, sim: ScoredSample, label: str, coords: bool) -> dict:
    out = {}
    for level in LEVELS:
        labels, gh = human.level(level)
        _, gs = sim.level(level)
        gh = gh[~np.isnan(gh).any(axis=1)]
        gs = gs[~np.isnan(gs).any(axis=1)]
        try:
            basis = fit_pca2(gh, level)
        except PsyEvalError as exc:
            out[level] = undefined(_reason(exc))
            continue
        ph, ps = project(basis, gh, "human"), project(basis, gs, label)
        entry = {
            "eigenvalues": [num(v) for v in basis.eigenvalues],
            "components": [[num(v) for v in row] for row in basis.components],
            "centroid": {
                "human": [num(v) for v in ph.coords.mean(axis=0)],
                label: [num(v) for v in ps.coords.mean(axis=0)] if len(ps.coords) else undefined("empty"),
            },
        }
        if coords:
            entry["coords"] = {
                "human": [[num(a), num(b)] for a, b in ph.coords],
                label: [[num(a), num(b)] for a, b in ps.coords],
            }
        out[level] = entry
    return out


def criterion_block(human: ScoredSample, sim: ScoredSample, totals: dict) -> dict:
    """``totals`` maps criterion name -> (human totals by subject id, simulated totals by subject id)."""
    out = {}
    for name, (th, ts) in sorted(totals.items()):
        entry = {}
        for key, sample, t in (("human", human, th), ("simulated", sim, ts)):
            rows = [k for k, s in enumerate(sample.subject_ids) if s in t and not math.isnan(t[s])]
            try:
                corr = criterion_correlations(
                    sample.domain_scores[rows], sample.domain_names, [t[sample.subject_ids[k]] for k in rows]
                )
                entry[key] = {d: num(v) for d, v in corr.items()}
            except PsyEvalError as exc:
                entry[key] = undefined(_reason(exc))
        if isinstance(entry["human"], dict) and isinstance(entry["simulated"], dict) and "undefined" not in entry["human"] and "undefined" not in entry["simulated"]:
            entry["delta"] = {
                d: num(entry["simulated"][d] - entry["human"][d])
                if isinstance(entry["simulated"][d], float) and isinstance(entry["human"][d], float)
                else undefined("zero-variance")
                for d in entry["human"]
            }
        out[name] = entry
    return out


def ablation_block(results) -> dict:
    base = next((r for r in results if r.removed_question_index == 0 and r.failed is None), None)
    rows = []
    for r in results:
        row = {"removed_question": r.removed_question_index}
        if r.failed:
            row["failed"] = r.failed
        else:
            row["r_squared"] = {d: num(v) for d, v in r.r_squared.items()}
            if base is not None:
                row["delta"] = {d: num(v - base.r_squared[d]) for d, v in r.r_squared.items()}
        rows.append(row)
    return {"runs": rows}


def cmd_compare(
    human: ResponseMatrix,
    simulated: ResponseMatrix,
    spec: ScaleSpec,
    options: CompareOptions | None = None,
    criterion_totals: dict | None = None,
    ablation=None,
) -> ComparisonReport:
    opts = options or CompareOptions()
    sh = _prepare(human, spec, opts.missing_policy)
    ss = _prepare(simulated, spec, opts.missing_policy)
    data = {
        "metadata": {
            "tool": "psyeval",
            "version": __version__,
            "scale": {"name": spec.name, "version": spec.version},
            "label": opts.label,
            "missing_policy": opts.missing_policy.value,
            "seeds": dict(opts.seeds),
            "decisions": DECISIONS,
            "n": {"human": len(sh.subject_ids), "simulated": len(ss.subject_ids)},
        },
        "descriptives": {},
        "reliability": {"human": _alpha_cells(spec, sh), "simulated": _alpha_cells(spec, ss)},
        "structural": _structural_block(spec, sh, ss),
        "discriminant": _discriminant_block(sh, ss),
        "similarity": _similarity_block(human, simulated, sh, ss),
        "pca": _pca_block(sh, ss, opts.label, opts.include_pca_coords),
    }
    for level in LEVELS:
        labels, gh = sh.level(level)
        _, gs = ss.level(level)
        data["descriptives"][level] = _describe_block(labels, gh, gs)
    if criterion_totals:
        data["criterion"] = criterion_block(sh, ss, criterion_totals)
    if ablation is not None:
        data["ablation"] = ablation_block(ablation)
    return ComparisonReport(data)


# ---------------------------------------------------------------- emission


def _round(obj):
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return undefined("non-finite")
        v = float(f"{obj:.6g}")
        return 0.0 if v == 0 else v
    if isinstance(obj, (np.floating,)):
        return _round(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def canonical_json(obj) -> str:
    return json.dumps(_round(obj), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def _fmt(v) -> str:
    if isinstance(v, dict) and "undefined" in v:
        return f"undefined:{v['undefined']}"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def emit_report(report: ComparisonReport, formats=("json", "csv"), out_dir=".") -> list[Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise PsyEvalError(f"cannot create {out}: {exc}") from exc
    data = report.data
    written = []
    if "json" in formats:
        p = out / "report.json"
        p.write_text(report.to_json(), encoding="utf-8")
        written.append(p)
    if "csv" not in formats:
        return written

    label = data["metadata"]["label"]
    for level, block in data["descriptives"].items():
        p = out / f"descriptives_{level}.csv"
        _write_csv(
            p,
            ["unit", "human_mu", "human_sigma", "sim_mu", "sim_sigma"],
            [
                [u, h["mu"], h["sigma"], s["mu"], s["sigma"]]
                for u, h, s in zip(block["units"], block["human"], block["simulated"])
            ],
        )
        written.append(p)

    p = out / "hai_radar.csv"
    _write_csv(
        p,
        ["series", "level", "hai", "mu_mae", "sigma_mae"],
        [[label, lvl, b["hai"], b["mu_mae"], b["sigma_mae"]] for lvl, b in data["descriptives"].items()],
    )
    written.append(p)

    p = out / "reliability.csv"
    rel = data["reliability"]
    _write_csv(p, ["unit", "human_alpha", "sim_alpha"], [[u, rel["human"][u], rel["simulated"][u]] for u in rel["human"]])
    written.append(p)

    fit_rows, cong_rows = [], []
    for model, entry in data["structural"].items():
        for side in ("human", "simulated"):
            f = entry[side]
            if "undefined" in f:
                fit_rows.append([model, side] + [f] * 7)
            else:
                fit_rows.append([model, side, f["chi2"], f["df"], f["cfi"], f["tli"], f["rmsea"], f["srmr"], f["converged"]])
        if isinstance(entry["congruence"], dict) and "undefined" not in entry["congruence"]:
            for factor, c in entry["congruence"].items():
                cong_rows.append([model, factor, c["tcc"], c["band"], c["loading_mae"]])
    p = out / "structural_fit.csv"
    _write_csv(p, ["model", "sample", "chi2", "df", "cfi", "tli", "rmsea", "srmr", "converged"], fit_rows)
    written.append(p)
    p = out / "congruence.csv"
    _write_csv(p, ["model", "factor", "tcc", "band", "loading_mae"], cong_rows)
    written.append(p)

    disc = data["discriminant"]
    p = out / "discriminant.csv"
    rows = []
    for side in ("human", "simulated"):
        if "undefined" in disc[side]:
            continue
        units = disc["units"]
        for a in range(len(units)):
            for b in range(a + 1, len(units)):
                rows.append([side, units[a], units[b], disc[side]["corr"][a][b]])
        rows.append([side, "mean_abs", "", disc[side]["mean_abs"]])
    _write_csv(p, ["sample", "unit_a", "unit_b", "r"], rows)
    written.append(p)

    sim = data["similarity"]
    if sim["status"] == "paired":
        p = out / "similarity.csv"
        _write_csv(p, ["domain", "mae", "r", "n"], [[d, c["mae"], c["r"], c["n"]] for d, c in sim["domains"].items()])
        written.append(p)

    for level, entry in data["pca"].items():
        if "coords" not in entry:
            continue
        p = out / f"pca_{level}.csv"
        rows = [[src, a, b] for src, pts in entry["coords"].items() for a, b in pts]
        _write_csv(p, ["source", "dim1", "dim2"], rows)
        written.append(p)

    if "ablation" in data:
        p = out / "ablation.csv"
        rows = []
        for run in data["ablation"]["runs"]:
            for d, v in run.get("r_squared", {}).items():
                rows.append([run["removed_question"], d, v])
        _write_csv(p, ["removed_question", "domain", "r_squared"], rows)
        written.append(p)
    return written
