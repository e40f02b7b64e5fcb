"""Command-line entry point: ``psyeval <command> [options]``."""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__, stats
from .cfa import build_ffm_spec, build_tfm_spec, fit_ml, sample_covariance
from .criterion import cwb_spec, ocb_spec, run_ablation, score_criterion
from .errors import HeaderError, PsyEvalError
from .report import (
    CompareOptions,
    ComparisonReport,
    _fit_summary,
    _pca_block,
    ablation_block,
    canonical_json,
    cmd_compare,
    emit_report,
    load_criterion,
    load_responses,
    num,
)
from .scale import LEVELS, Coding, MissingPolicy, apply_reverse_coding, bfi2, load_scale_spec, score
from .simulate import (
    HttpResponder,
    Method,
    MockResponder,
    SimulationConfig,
    load_personas,
    load_shapes,
    load_transcripts,
    run_simulation,
    write_matrix_csv,
)

log = logging.getLogger("psyeval")

EXIT_DOMAIN_ERROR = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _scale(args):
    return load_scale_spec(args.scale) if args.scale else bfi2()


def _scored(path, spec, coding: str, policy: str):
    matrix = load_responses(path, spec, Coding(coding))
    if matrix.coding is Coding.RAW:
        matrix = apply_reverse_coding(matrix, spec)
    return matrix, score(matrix, spec, MissingPolicy(policy))


def _responder(args, spec):
    if args.responder == "mock":
        return MockResponder(seed=args.seed, likert=spec.likert)
    if not args.endpoint or not args.model:
        raise UsageError("--responder http needs --endpoint and --model")
    return HttpResponder(args.endpoint, args.model)


def _write_manifest(out: Path, args, extra=None) -> None:
    config = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    manifest = {
        "command": args.command,
        "config": config,
        "config_hash": hashlib.sha256(blob).hexdigest(),
        "seeds": {"seed": getattr(args, "seed", None)},
        "versions": {"psyeval": __version__, "numpy": np.__version__, "python": platform.python_version()},
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(canonical_json(manifest), encoding="utf-8")


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def do_score(args):
    spec = _scale(args)
    _, sample = _scored(args.human, spec, args.coding, args.missing)
    out = _out(args)
    for level in LEVELS:
        labels, grid = sample.level(level)
        with open(out / f"scores_{level}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", *labels])
            for sid, row in zip(sample.subject_ids, grid):
                w.writerow([sid, *(f"{v:.6g}" for v in row)])
    _write_manifest(out, args, {"n_scored": len(sample.subject_ids)})


def do_describe(args):
    spec = _scale(args)
    _, sample = _scored(args.human, spec, args.coding, args.missing)
    result = {}
    for level in LEVELS:
        labels, grid = sample.level(level)
        rows = {}
        for name, col in zip(labels, grid.T):
            try:
                d = stats.describe(col)
                rows[name] = {
                    "mu": num(d.mu),
                    "sigma": num(d.sigma),
                    "skewness": num(d.skewness, "zero-variance"),
                    "excess_kurtosis": num(d.excess_kurtosis, "zero-variance"),
                    "n": d.n,
                }
            except PsyEvalError as exc:
                rows[name] = {"undefined": type(exc).__name__}
        result[level] = rows
    out = _out(args)
    (out / "describe.json").write_text(canonical_json(result), encoding="utf-8")
    _write_manifest(out, args)


def do_cfa(args):
    spec = _scale(args)
    _, sample = _scored(args.human, spec, args.coding, args.missing)
    result = {}
    for domain in spec.domains:
        model = build_tfm_spec(domain, spec)
        cols = [sample.item_ids.index(int(n[4:])) for n in model.indicator_names]
        cov = sample_covariance(sample.item_scores[:, cols], model.indicator_names)
        result[f"TFM:{domain.name}"] = _fit_summary(fit_ml(cov, model))
    model = build_ffm_spec(spec)
    result["FFM"] = _fit_summary(fit_ml(sample_covariance(sample.facet_scores, model.indicator_names), model))
    out = _out(args)
    (out / "cfa.json").write_text(canonical_json(result), encoding="utf-8")
    _write_manifest(out, args)


def do_pca(args):
    spec = _scale(args)
    _, human = _scored(args.human, spec, args.coding, args.missing)
    _, sim = _scored(args.sim, spec, args.sim_coding, args.missing)
    block = _pca_block(human, sim, args.label, True)
    out = _out(args)
    (out / "pca.json").write_text(canonical_json(block), encoding="utf-8")
    for level, entry in block.items():
        if "coords" in entry:
            with open(out / f"pca_{level}.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["source", "dim1", "dim2"])
                for src, pts in entry["coords"].items():
                    for a, b in pts:
                        w.writerow([src, f"{a:.6g}", f"{b:.6g}"])
    _write_manifest(out, args)


def _criterion_totals(args):
    totals = {}
    for crit in (ocb_spec(), cwb_spec()):
        try:
            mh = load_criterion(args.human, crit)
            ms = load_criterion(args.sim, crit)
        except HeaderError:
            continue
        th = dict(zip(mh.subject_ids, score_criterion(mh, crit)))
        ts = dict(zip(ms.subject_ids, score_criterion(ms, crit)))
        totals[crit.name] = (th, ts)
    return totals


def do_compare(args):
    spec = _scale(args)
    human = load_responses(args.human, spec, Coding(args.coding))
    sim = load_responses(args.sim, spec, Coding(args.sim_coding))
    opts = CompareOptions(MissingPolicy(args.missing), label=args.label, seeds={"seed": args.seed})
    report = cmd_compare(human, sim, spec, opts, criterion_totals=_criterion_totals(args) or None)
    out = _out(args)
    emit_report(report, tuple(args.format), out)
    _write_manifest(out, args, {"warnings": _report_warnings(report)})


def _report_warnings(report: ComparisonReport) -> list[str]:
    notes = []
    for model, entry in report["structural"].items():
        for side in ("human", "simulated"):
            f = entry[side]
            if "undefined" in f:
                notes.append(f"{model}/{side}: {f['undefined']}")
            else:
                notes.extend(f"{model}/{side}: {w}" for w in f["warnings"])
    return notes


def _profiles(method: Method, path):
    loader = {Method.PSI: load_transcripts, Method.PERSONA: load_personas, Method.SHAPE: load_shapes}[method]
    return loader(path)


def do_simulate(args):
    spec = _scale(args)
    cfg = SimulationConfig(Method(args.method), args.temperature, args.max_parallel)
    run = run_simulation(_profiles(cfg.method, args.profiles), spec, cfg, _responder(args, spec))
    out = _out(args)
    write_matrix_csv(run.matrix, out / "simulated.csv")
    with open(out / "failures.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "item", "reason"])
        for f in run.failures:
            w.writerow([f.subject_id, f.item_id, f.reason])
    _write_manifest(out, args, {"n_requests": run.n_requests, "n_failures": len(run.failures)})


def do_ablate(args):
    spec = _scale(args)
    transcripts = load_transcripts(args.transcripts)
    _, human = _scored(args.human, spec, args.coding, args.missing)
    cfg = SimulationConfig(Method.PSI, args.temperature, args.max_parallel)
    results = run_ablation(transcripts, spec, cfg, _responder(args, spec), human)
    out = _out(args)
    (out / "ablation.json").write_text(canonical_json(ablation_block(results)), encoding="utf-8")
    _write_manifest(out, args, {"failed_runs": [r.removed_question_index for r in results if r.failed]})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="psyeval", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, human=True, sim=False):
        p.add_argument("--scale", help="scale spec JSON (default: bundled BFI-2)")
        if human:
            p.add_argument("--human", required=True)
            p.add_argument("--coding", choices=["raw", "reversed"], default="raw")
        if sim:
            p.add_argument("--sim", required=True)
            p.add_argument("--sim-coding", choices=["raw", "reversed"], default="raw")
            p.add_argument("--label", default="simulated")
        p.add_argument("--missing", choices=[m.value for m in MissingPolicy], default="listwise")
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int, default=0)

    def responder_opts(p):
        p.add_argument("--responder", choices=["mock", "http"], default="mock")
        p.add_argument("--endpoint")
        p.add_argument("--model")
        p.add_argument("--temperature", type=float, default=0.0)
        p.add_argument("--max-parallel", type=int, default=4)

    p = sub.add_parser("score", help="item/facet/domain scores")
    common(p)
    p.set_defaults(func=do_score)

    p = sub.add_parser("describe", help="descriptives of one sample")
    common(p)
    p.set_defaults(func=do_describe)

    p = sub.add_parser("compare", help="full human vs simulated report")
    common(p, sim=True)
    p.add_argument("--format", nargs="+", choices=["json", "csv"], default=["json", "csv"])
    p.set_defaults(func=do_compare)

    p = sub.add_parser("cfa", help="facet and domain CFA fits of one sample")
    common(p)
    p.set_defaults(func=do_cfa)

    p = sub.add_parser("pca", help="project a simulated sample into the human PCA plane")
    common(p, sim=True)
    p.set_defaults(func=do_pca)

    p = sub.add_parser("simulate", help="query a responder for every subject x item")
    common(p, human=False)
    p.add_argument("--method", choices=[m.value for m in Method], required=True)
    p.add_argument("--profiles", required=True)
    responder_opts(p)
    p.set_defaults(func=do_simulate)

    p = sub.add_parser("ablate", help="leave-one-question-out R^2 against human domains")
    common(p)
    p.add_argument("--transcripts", required=True)
    responder_opts(p)
    p.set_defaults(func=do_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"UsageError: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PsyEvalError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
