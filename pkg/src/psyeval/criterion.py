"""Behavioral criteria (OCB/CWB) and the leave-one-question-out ablation."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Sequence

import numpy as np

from . import stats
from .errors import InsufficientDataError, MissingItemError, PsyEvalError, RangeError, SchemaError
from .scale import LikertScale, ResponseMatrix, ScaleSpec, ScoredSample, apply_reverse_coding, score
from .simulate import N_PSI_QUESTIONS, InterviewTranscript, SimulationConfig, run_simulation

log = logging.getLogger(__name__)

# column order of the published criterion tables: EXT, AGR, NEU, CON, OPE
DOMAIN_ORDER = ("Extraversion", "Agreeableness", "Neuroticism", "Conscientiousness", "Openness")


@dataclass(frozen=True)
class CriterionSpec:
    name: str
    item_ids: tuple[int, ...] = tuple(range(1, 11))
    likert: LikertScale = field(default_factory=lambda: LikertScale(1, 5))
    texts: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.item_ids) < 2:
            raise SchemaError("a criterion needs at least 2 items")
        if len(set(self.item_ids)) != len(self.item_ids):
            raise SchemaError("duplicate criterion item ids")

    @property
    def columns(self) -> tuple[str, ...]:
        return tuple(f"{self.name}{i}" for i in self.item_ids)


@lru_cache(maxsize=None)
def _criterion_texts() -> dict:
    text = resources.files("psyeval.data").joinpath("criteria.json").read_text(encoding="utf-8")
    return json.loads(text)


def ocb_spec() -> CriterionSpec:
    return CriterionSpec("OCB", texts=tuple(_criterion_texts()["OCB"]))


def cwb_spec() -> CriterionSpec:
    return CriterionSpec("CWB", texts=tuple(_criterion_texts()["CWB"]))


def score_criterion(matrix: ResponseMatrix, spec: CriterionSpec) -> np.ndarray:
    """Per-subject mean over the criterion items; NaN where a subject skipped an item."""
    absent = [i for i in spec.item_ids if i not in matrix.item_ids]
    if absent:
        raise MissingItemError(f"{spec.name} items missing from matrix: {absent}")
    grid = matrix.take_items(spec.item_ids)
    present = grid[~np.isnan(grid)]
    if present.size and (present.min() < spec.likert.min or present.max() > spec.likert.max):
        r, c = map(int, np.argwhere((grid < spec.likert.min) | (grid > spec.likert.max))[0])
        raise RangeError(
            f"{spec.name}{spec.item_ids[c]} = {grid[r, c]:g} at row {r + 1} outside range",
            row=r + 1,
            column=f"{spec.name}{spec.item_ids[c]}",
        )
    return grid.mean(axis=1)


def criterion_correlations(domain_scores, domain_names: Sequence[str], criterion_totals) -> dict[str, float]:
    """Pearson r of each domain with a criterion, in the published column order."""
    grid = np.asarray(domain_scores, dtype=float)
    totals = np.asarray(criterion_totals, dtype=float)
    if grid.shape[0] != totals.size:
        raise InsufficientDataError("domain scores and criterion totals are not aligned")
    if totals.size < 3:
        raise InsufficientDataError("need at least 3 subjects")
    names = list(domain_names)
    ordered = [n for n in DOMAIN_ORDER if n in names] + [n for n in names if n not in DOMAIN_ORDER]
    return {n: stats.pearson_r(grid[:, names.index(n)], totals) for n in ordered}


@dataclass(frozen=True)
class AblationResult:
    removed_question_index: int  # 0 = baseline with all questions
    r_squared: dict[str, float]
    failed: str | None = None

    def __post_init__(self):
        if not 0 <= self.removed_question_index <= N_PSI_QUESTIONS:
            raise ValueError(f"question index {self.removed_question_index} outside 0..32")


def _domain_r2(sim: ScoredSample, human: ScoredSample) -> dict[str, float]:
    pos = {sid: k for k, sid in enumerate(human.subject_ids)}
    common = [s for s in sim.subject_ids if s in pos]
    if len(common) < 3:
        raise InsufficientDataError("fewer than 3 simulated subjects match the human sample")
    sim_rows = [sim.subject_ids.index(s) for s in common]
    hum_rows = [pos[s] for s in common]
    return {
        name: stats.r_squared(sim.domain_scores[sim_rows, j], human.domain_scores[hum_rows, j])
        for j, name in enumerate(sim.domain_names)
    }


def run_ablation(
    transcripts: Sequence[InterviewTranscript],
    spec: ScaleSpec,
    cfg: SimulationConfig,
    responder,
    human: ScoredSample,
    cache: dict | None = None,
) -> list[AblationResult]:
    """Baseline plus one simulation per dropped interview question, scored against human domains."""
    if not transcripts:
        raise InsufficientDataError("ablation needs transcripts")
    cache = {} if cache is None else cache
    seed = getattr(responder, "seed", None)
    results = []
    for k in range(0, N_PSI_QUESTIONS + 1):
        omit = (k,) if k else ()
        key = (cfg.method.value, omit, seed)
        try:
            if key not in cache:
                run = run_simulation(transcripts, spec, cfg, responder, omit=omit)
                cache[key] = run.matrix
            coded = apply_reverse_coding(cache[key], spec)
            results.append(AblationResult(k, _domain_r2(score(coded, spec), human)))
        except PsyEvalError as exc:
            log.warning("ablation run %d failed: %s", k, exc)
            results.append(AblationResult(k, {}, failed=f"{type(exc).__name__}: {exc}"))
    return results
