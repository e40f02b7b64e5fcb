"""Acceptance suite: one PASS/FAIL line per criterion, at the stated tolerances."""
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from psyeval import stats
from psyeval.cfa import (
    CfaModelSpec,
    CovarianceInput,
    build_ffm_spec,
    build_tfm_spec,
    discrepancy,
    discrepancy_gradient,
    fit_indices,
    fit_ml,
    sample_covariance,
)
from psyeval.congruence import tcc
from psyeval.pca import fit_pca2, project
from psyeval.report import cmd_compare, load_responses
from psyeval.scale import Coding, apply_reverse_coding, reverse_code, score
from psyeval.simulate import (
    InterviewTranscript,
    MockResponder,
    PersonaProfile,
    ShapeProfile,
    SimulationConfig,
    build_prompt,
    render_description,
    run_simulation,
)
from synth import bfi_like_responses, three_factor_sample

LINES = []


def verdict(name, ok, detail=""):
    line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  [{detail}]" if detail else "")
    print(line)
    LINES.append(line)
    assert ok, line


# ---------------------------------------------------------------- CFA


def test_cfa_recovery():
    X, L, phi = three_factor_sample(5000, seed=2024)
    model = CfaModelSpec(tuple(f"v{i}" for i in range(12)), ("F1", "F2", "F3"), L != 0)
    t0 = time.perf_counter()
    fit = fit_ml(sample_covariance(X), model)
    elapsed = time.perf_counter() - t0
    lam_err = float(np.max(np.abs(fit.loadings_std - L)))
    phi_err = float(np.max(np.abs(fit.factor_corr - phi)))
    ok = lam_err <= 0.05 and phi_err <= 0.05 and fit.converged and elapsed < 5
    verdict(
        "CFA recovery (N=5000, 3x12)",
        ok,
        f"max|dL|={lam_err:.4f} max|dPhi|={phi_err:.4f} converged={fit.converged} t={elapsed:.3f}s",
    )


def test_saturated_fit():
    model = CfaModelSpec(("x1", "x2", "x3"), ("f",), np.ones((3, 1), bool))
    rng = np.random.default_rng(7)
    worst = (0.0, 0.0)
    failures = 0
    trials = 20
    for _ in range(trials):
        a = rng.normal(size=(3, 3))
        S = a @ a.T + 0.1 * np.eye(3)
        fit = fit_ml(CovarianceInput(S, 200), model)
        good = fit.F_ml < 1e-8 and fit.df == 0 and fit.srmr < 1e-4
        failures += not good
        worst = (max(worst[0], fit.F_ml), max(worst[1], fit.srmr))
    verdict(
        "Saturated 1-factor/3-indicator fit on random PD covariances",
        failures == 0,
        f"{trials - failures}/{trials} exact; worst F={worst[0]:.3g} SRMR={worst[1]:.3g}",
    )


def _fd_check(model, rng, points=10, h=1e-5):
    S = rng.normal(size=(model.p, model.p))
    S = S @ S.T / model.p + np.eye(model.p)
    worst = 0.0
    for _ in range(points):
        theta = np.concatenate(
            [
                rng.uniform(0.3, 0.9, model.p),
                np.log(rng.uniform(0.2, 1.0, model.p)),
                rng.uniform(-0.4, 0.4, model.n_correlations),
            ]
        )
        g = discrepancy_gradient(theta, S, model)
        fd = np.empty_like(theta)
        for k in range(theta.size):
            e = np.zeros_like(theta)
            e[k] = h
            fd[k] = (discrepancy(theta + e, S, model) - discrepancy(theta - e, S, model)) / (2 * h)
        worst = max(worst, float(np.max(np.abs(g - fd)) / np.max(np.abs(fd))))
    return worst


def test_gradient_check(spec):
    rng = np.random.default_rng(99)
    tfm = _fd_check(build_tfm_spec(spec.domain("Conscientiousness"), spec), rng)
    ffm = _fd_check(build_ffm_spec(spec), rng)
    verdict("Analytic F_ML gradient vs central differences", max(tfm, ffm) < 1e-4, f"TFM rel={tfm:.2e} FFM rel={ffm:.2e}")


def test_fit_index_arithmetic():
    idx = fit_indices(100, 51, 2000, 66, 357, np.eye(2), np.eye(2))
    checks = {
        "RMSEA": (idx.rmsea, 0.0520),
        "CFI": (idx.cfi, 0.9747),
        "TLI": (idx.tli, 0.9674),
    }
    detail = " ".join(f"{k}={v:.6f} (target {t})" for k, (v, t) in checks.items())
    verdict("Fit-index arithmetic", all(abs(v - t) <= 1e-4 for v, t in checks.values()), detail)


# ---------------------------------------------------------------- metric oracles


def _mean(v):
    return sum(v) / len(v)


def _pearson(x, y):
    mx, my = _mean(x), _mean(y)
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    return sxy / math.sqrt(sum((a - mx) ** 2 for a in x) * sum((b - my) ** 2 for b in y))


def _sd(v):
    m = _mean(v)
    return math.sqrt(sum((a - m) ** 2 for a in v) / (len(v) - 1))


def _alpha(rows):
    k = len(rows[0])
    item_var = sum(_sd([r[c] for r in rows]) ** 2 for c in range(k))
    return k / (k - 1) * (1 - item_var / _sd([sum(r) for r in rows]) ** 2)


def _r2(x, y):
    mx, my = _mean(x), _mean(y)
    slope = sum((a - mx) * (b - my) for a, b in zip(x, y)) / sum((a - mx) ** 2 for a in x)
    resid = sum((b - (my + slope * (a - mx))) ** 2 for a, b in zip(x, y))
    return 1 - resid / sum((b - my) ** 2 for b in y)


def test_metric_oracles():
    rng = np.random.default_rng(123)
    worst = {}

    def track(name, got, want):
        worst[name] = max(worst.get(name, 0.0), abs(got - want))

    hai_exact = True
    for _ in range(100):
        n = int(rng.integers(5, 40))
        x, y = rng.normal(size=n), rng.normal(size=n)
        xl, yl = x.tolist(), y.tolist()
        track("pearson_r", stats.pearson_r(x, y), _pearson(xl, yl))
        track("mae", stats.mae(x, y), _mean([abs(a - b) for a, b in zip(xl, yl)]))
        track("tcc", tcc(x, y), sum(a * b for a, b in zip(xl, yl)) / math.sqrt(sum(a * a for a in xl) * sum(b * b for b in yl)))
        track("r_squared", stats.r_squared(x, y), _r2(xl, yl))
        grid = rng.integers(1, 6, size=(int(rng.integers(10, 60)), int(rng.integers(3, 12)))).astype(float)
        sh, sm = stats.sd_profile(grid), stats.sd_profile(rng.permutation(grid.ravel()).reshape(grid.shape))
        track("hai", stats.hai(sh, sm), _pearson([_sd(grid[:, j].tolist()) for j in range(grid.shape[1])], sm.tolist()))
        hai_exact &= stats.hai(sh, sm) == stats.pearson_r(sh, sm)
        items = rng.normal(size=(30, 4)) + rng.normal(size=(30, 1))
        track("cronbach_alpha", stats.cronbach_alpha(items), _alpha(items.tolist()))
        corr = stats.correlation_matrix(rng.normal(size=(20, 5)))
        off = [abs(corr[i][j]) for i in range(5) for j in range(5) if i < j]
        track("discriminant_mean_abs", stats.discriminant_mean_abs(corr), _mean(off))
    bad = {k: v for k, v in worst.items() if v > 1e-10}
    detail = " ".join(f"{k}={v:.1e}" for k, v in sorted(worst.items())) + f" hai_is_pearson={hai_exact}"
    verdict("Metric oracles on 100 random instances", not bad and hai_exact, detail)


def test_discriminant_spot_check():
    # human row of the published domain correlation table, pairs E-A..N-O
    row = [0.17, 0.35, -0.45, 0.22, 0.33, -0.36, 0.20, -0.49, 0.09, -0.11]
    corr = np.eye(5)
    iu = np.triu_indices(5, 1)
    corr[iu] = row
    corr.T[iu] = row
    value = stats.discriminant_mean_abs(corr)
    verdict("Discriminant mean-abs of the human row", abs(value - 0.277) < 1e-12 and round(value, 2) == 0.28, f"{value:.6f}")


# ---------------------------------------------------------------- scale


def test_reverse_coding_and_scoring_invariants(spec):
    involution = all(
        reverse_code(reverse_code(v, spec.likert), spec.likert) == v
        for item in spec.items
        for v in range(spec.likert.min, spec.likert.max + 1)
    )
    raw = bfi_like_responses(spec, 1000, seed=31)
    coded = apply_reverse_coding(raw, spec)
    keyed = np.array([i in spec.reverse_ids for i in spec.item_ids])
    flipped = np.where(keyed, spec.likert.min + spec.likert.max - coded.values, coded.values)
    involution &= bool(np.array_equal(flipped, raw.values))
    sample = score(coded, spec)
    worst = 0.0
    for j, d in enumerate(spec.domains):
        cols = [spec.facet_names.index(n) for n in d.facet_names]
        worst = max(worst, float(np.max(np.abs(sample.domain_scores[:, j] - sample.facet_scores[:, cols].mean(axis=1)))))
    verdict("Reverse-coding involution and domain = mean of facets", involution and worst <= 1e-12, f"max dev={worst:.1e}")


# ---------------------------------------------------------------- prompts


def test_prompt_goldens(spec, golden):
    persona = render_description(
        PersonaProfile(
            "p",
            (
                "I wear a lot of leather.",
                "I have boots I always wear.",
                "I sleep in late during the day.",
                "I listen to metal music.",
                "I have black spiky hair.",
            ),
        )
    )
    shape = render_description(
        ShapeProfile(
            "s",
            (("unfriendly", "friendly"), ("lethargic", "energetic"), ("unassertive", "assertive"), ("timid", "bold"), ("inactive", "active")),
            9,
        )
    )
    psi = render_description(
        InterviewTranscript.from_answers("t", [f"Synthetic answer number {k}." for k in range(1, 33)])
    )
    prompt = build_prompt(persona, spec.item(1), spec.likert)
    checks = {
        "persona": persona
        == "I wear a lot of leather. I have boots I always wear. I sleep in late during the day. I listen to metal music. I have black spiky hair.",
        "shape": shape == "You are extremely friendly, extremely energetic, extremely assertive, extremely bold, and extremely active.",
        "psi": psi == (golden / "psi_description.txt").read_text(encoding="utf-8"),
        "t_base": prompt.encode("utf-8").startswith(b"For the following task, respond in a way that matches:"),
    }
    verdict("Prompt goldens", all(checks.values()), " ".join(f"{k}={v}" for k, v in checks.items()))


# ---------------------------------------------------------------- pipeline


def _pipeline(spec):
    n = 50
    ids = [f"s{k:04d}" for k in range(n)]
    rng = np.random.default_rng(5)
    transcripts = [
        InterviewTranscript.from_answers(sid, [f"Subject {sid} answer {q}: {rng.integers(1000)}" for q in range(32)])
        for sid in ids
    ]
    human = bfi_like_responses(spec, n, seed=17, ids=ids)
    run = run_simulation(transcripts, spec, SimulationConfig(max_parallel=4), MockResponder(seed=42, likert=spec.likert))
    return cmd_compare(human, run.matrix, spec)


def test_end_to_end_determinism(spec):
    t0 = time.perf_counter()
    a = _pipeline(spec)
    b = _pipeline(spec)
    elapsed = time.perf_counter() - t0
    cells = [a["descriptives"][lvl]["hai"] for lvl in ("item", "facet", "domain")]
    cells += [c["r"] for c in a["similarity"]["domains"].values()]
    for entry in a["structural"].values():
        cong = entry["congruence"]
        cells += [c["tcc"] for c in cong.values()] if "undefined" not in cong else [cong]
    finite = all(isinstance(v, float) and math.isfinite(v) for v in cells)
    same = a.to_json() == b.to_json()
    verdict(
        "End-to-end mock pipeline determinism (50 x 60)",
        same and finite and elapsed < 60,
        f"identical={same} finite={finite} ({len(cells)} cells) t={elapsed:.2f}s",
    )


def test_self_comparison_fixed_point(spec):
    human = bfi_like_responses(spec, 300, seed=8)
    rep = cmd_compare(human, human, spec)
    desc = rep["descriptives"].values()
    mae_zero = all(b["mu_mae"] == 0 and b["sigma_mae"] == 0 for b in desc)
    hai_one = all(b["hai"] == pytest.approx(1.0, abs=1e-12) for b in desc)
    cong = [c for e in rep["structural"].values() for c in e["congruence"].values()]
    tcc_one = all(c["tcc"] == pytest.approx(1.0, abs=1e-12) for c in cong)
    lmae_zero = all(c["loading_mae"] == 0 for c in cong)
    verdict(
        "Self-comparison fixed point",
        mae_zero and hai_one and tcc_one and lmae_zero,
        f"mae0={mae_zero} hai1={hai_one} tcc1={tcc_one} loading_mae0={lmae_zero}",
    )


def test_pca_properties(spec):
    sample = score(apply_reverse_coding(bfi_like_responses(spec, 400, seed=12), spec), spec)
    ok, worst = True, {"ortho": 0.0, "mean": 0.0, "var": 0.0}
    for level in ("item", "facet", "domain"):
        _, grid = sample.level(level)
        b = fit_pca2(grid, level)
        c = project(b, grid).coords
        var = c.var(axis=0, ddof=1)
        worst["ortho"] = max(worst["ortho"], float(np.max(np.abs(b.components @ b.components.T - np.eye(2)))))
        worst["mean"] = max(worst["mean"], float(np.max(np.abs(c.mean(axis=0)))))
        worst["var"] = max(worst["var"], float(np.max(np.abs(var - b.eigenvalues))))
        ok &= var[0] >= var[1]
    ok &= worst["ortho"] <= 1e-10 and worst["mean"] < 1e-9 and worst["var"] <= 1e-8
    verdict("PCA basis and projection properties", ok, " ".join(f"{k}={v:.1e}" for k, v in worst.items()))


# ---------------------------------------------------------------- conditional dataset criterion

DATASET = os.environ.get("PSI_DATASET")


@pytest.mark.skipif(not DATASET, reason="set PSI_DATASET to the released CSV to run")
def test_human_domain_alpha(spec):
    published = {"Extraversion": 0.87, "Agreeableness": 0.85, "Conscientiousness": 0.90, "Neuroticism": 0.94, "Openness": 0.89}
    sample = score(load_responses(Path(DATASET), spec, Coding.REVERSE_APPLIED), spec)
    col = {i: k for k, i in enumerate(sample.item_ids)}
    got = {d.name: stats.cronbach_alpha(sample.item_scores[:, [col[i] for i in d.item_ids]]) for d in spec.domains}
    verdict(
        "Human domain alpha vs published table",
        all(abs(got[k] - v) <= 0.01 for k, v in published.items()),
        " ".join(f"{k[:3]}={got[k]:.3f}/{v}" for k, v in published.items()),
    )
