"""Prompt construction for the three simulation methods and the item-by-item runner."""
from __future__ import annotations

import csv
import enum
import hashlib
import json
import logging
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Iterable, Protocol, Sequence, Union

import numpy as np

from .errors import (
    ConfigError,
    CsvError,
    HeaderError,
    ProfileError,
    ResponderError,
    UnparseableResponseError,
)
from .scale import Coding, ItemDef, LikertScale, ResponseMatrix, ScaleSpec

log = logging.getLogger(__name__)

T_BASE = "For the following task, respond in a way that matches:"

AGREEMENT_ANCHORS = (
    "Strongly disagree",
    "Somewhat disagree",
    "Neither agree nor disagree",
    "Somewhat agree",
    "Strongly agree",
)

N_PSI_QUESTIONS = 32


@lru_cache(maxsize=None)
def psi_questions() -> tuple[str, ...]:
    text = resources.files("psyeval.data").joinpath("psi_questions.json").read_text(encoding="utf-8")
    return tuple(json.loads(text))


@lru_cache(maxsize=None)
def item_template() -> str:
    return resources.files("psyeval.data").joinpath("item_prompt.txt").read_text(encoding="utf-8")


class Method(str, enum.Enum):
    PSI = "psi"
    PERSONA = "persona"
    SHAPE = "shape"


@dataclass(frozen=True)
class InterviewTranscript:
    subject_id: str
    qa: tuple[tuple[str, str], ...]

    def __post_init__(self):
        if len(self.qa) != N_PSI_QUESTIONS:
            raise ProfileError(f"transcript {self.subject_id!r} has {len(self.qa)} pairs, expected 32")

    @classmethod
    def from_answers(cls, subject_id, answers: Sequence[str], validate: bool = True):
        questions = psi_questions()
        if len(answers) != len(questions):
            raise ProfileError(f"expected {len(questions)} answers, got {len(answers)}")
        return cls(str(subject_id), tuple(zip(questions, (str(a) for a in answers))))

    def validate_questions(self) -> None:
        for k, ((q, _), canon) in enumerate(zip(self.qa, psi_questions()), start=1):
            if q != canon:
                raise ProfileError(f"question {k} does not match the canonical interview")


@dataclass(frozen=True)
class PersonaProfile:
    subject_id: str
    sentences: tuple[str, ...]

    def __post_init__(self):
        if len(self.sentences) != 5 or any(not s.strip() for s in self.sentences):
            raise ProfileError(f"persona {self.subject_id!r} needs 5 non-empty sentences")


@dataclass(frozen=True)
class ShapeProfile:
    subject_id: str
    markers: tuple[tuple[str, str], ...]  # (low adjective, high adjective)
    level: int

    def __post_init__(self):
        if len(self.markers) != 5:
            raise ProfileError(f"shape profile {self.subject_id!r} needs 5 adjective markers")
        if any(not lo.strip() or not hi.strip() for lo, hi in self.markers):
            raise ProfileError("empty adjective in shape markers")
        if not isinstance(self.level, (int, np.integer)) or not 1 <= self.level <= 9:
            raise ProfileError(f"shape level must be an integer in 1..9, got {self.level!r}")


Profile = Union[InterviewTranscript, PersonaProfile, ShapeProfile]


def qualify(low: str, high: str, level: int) -> str:
    """Render one adjective marker at an intensity level 1..9."""
    table = {
        1: f"extremely {low}",
        2: f"very {low}",
        3: low,
        4: f"a bit {low}",
        5: f"neither {low} nor {high}",
        6: f"a bit {high}",
        7: high,
        8: f"very {high}",
        9: f"extremely {high}",
    }
    try:
        return table[level]
    except KeyError:
        raise ProfileError(f"level {level} outside 1..9") from None


def render_description(profile: Profile, omit: Iterable[int] = ()) -> str:
    """Personality description text for a profile.

    ``omit`` lists 1-based interview questions to leave out (ablation only).
    """
    if isinstance(profile, InterviewTranscript):
        skip = set(omit)
        blocks = [
            f"Q: {q}\nA: {a}\n" for k, (q, a) in enumerate(profile.qa, start=1) if k not in skip
        ]
        if not blocks:
            raise ProfileError("every interview question was omitted")
        return "".join(blocks)
    if omit:
        raise ProfileError("question omission only applies to interview transcripts")
    if isinstance(profile, PersonaProfile):
        return " ".join(s.strip() for s in profile.sentences)
    if isinstance(profile, ShapeProfile):
        parts = [qualify(lo, hi, int(profile.level)) for lo, hi in profile.markers]
        return f"You are {', '.join(parts[:-1])}, and {parts[-1]}."
    raise ProfileError(f"unsupported profile type {type(profile).__name__}")


def _anchor_lines(likert: LikertScale) -> str:
    if likert.n_points == len(AGREEMENT_ANCHORS):
        labels = AGREEMENT_ANCHORS
        return "\n".join(f'{likert.min + k} = "{label}"' for k, label in enumerate(labels))
    return f'{likert.min} = "{AGREEMENT_ANCHORS[0]}"\n{likert.max} = "{AGREEMENT_ANCHORS[-1]}"'


def build_prompt(description: str, item: ItemDef, likert: LikertScale) -> str:
    if not description or not description.strip():
        raise ProfileError("empty personality description")
    return item_template().format(
        description=description,
        anchors=_anchor_lines(likert),
        statement=item.text,
        min=likert.min,
        max=likert.max,
    )


_INT_TOKEN = re.compile(r"(?<![\w.])[-+]?\d+(?![\w]|\.\d)")


def parse_likert_response(reply: str, likert: LikertScale) -> int:
    """First standalone integer within the scale range."""
    if reply is None or not reply.strip():
        raise UnparseableResponseError("empty reply")
    for m in _INT_TOKEN.finditer(reply):
        value = int(m.group())
        if likert.contains(value):
            return value
    raise UnparseableResponseError(f"no in-range integer in reply {reply[:80]!r}")


# ---------------------------------------------------------------- responders


class Responder(Protocol):
    concurrent_safe: bool

    def complete(self, prompt: str, temperature: float = 0.0) -> str: ...


def stable_hash64(data: bytes, seed: int = 0) -> int:
    digest = hashlib.blake2b(data, digest_size=8, key=seed.to_bytes(8, "big", signed=True))
    return int.from_bytes(digest.digest(), "big")


@dataclass
class MockResponder:
    """Offline responder: answer is a seeded 64-bit hash of the prompt bytes folded into the scale."""

    seed: int = 0
    likert: LikertScale = field(default_factory=lambda: LikertScale(1, 5))
    concurrent_safe: bool = True

    def answer(self, prompt: str) -> int:
        h = stable_hash64(prompt.encode("utf-8"), self.seed)
        return self.likert.min + h % self.likert.n_points

    def complete(self, prompt: str, temperature: float = 0.0) -> str:
        return str(self.answer(prompt))


@dataclass
class ConstantResponder:
    reply: str = "3"
    concurrent_safe: bool = True

    def complete(self, prompt: str, temperature: float = 0.0) -> str:
        return self.reply


class HttpResponder:
    """OpenAI-compatible chat-completions client."""

    concurrent_safe = True

    def __init__(self, endpoint: str, model: str, api_key: str | None = None, timeout: float = 60.0, client=None):
        import httpx

        self.url = endpoint.rstrip("/") + "/chat/completions"
        self.model = model
        key = api_key if api_key is not None else os.environ.get("RESPONDER_API_KEY")
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        self._client = client or httpx.Client(timeout=timeout, headers=headers)
        self._httpx = httpx

    def request_body(self, prompt: str, temperature: float) -> dict:
        return {
            "model": self.model,
            "temperature": temperature,
            "messages": [{"role": "user", "content": prompt}],
        }

    def complete(self, prompt: str, temperature: float = 0.0) -> str:
        try:
            resp = self._client.post(self.url, json=self.request_body(prompt, temperature))
            resp.raise_for_status()
            return resp.json()["choices"][0]["message"]["content"]
        except (self._httpx.HTTPError, KeyError, IndexError, TypeError, ValueError) as exc:
            raise ResponderError(f"chat completion failed: {exc}") from exc


# ---------------------------------------------------------------- runner


@dataclass(frozen=True)
class SimulationConfig:
    method: Method = Method.PSI
    temperature: float = 0.0
    max_parallel: int = 1
    max_retries: int = 2
    backoff: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if self.max_parallel < 1:
            raise ConfigError("max_parallel must be >= 1")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")


_PROFILE_TYPES = {
    Method.PSI: InterviewTranscript,
    Method.PERSONA: PersonaProfile,
    Method.SHAPE: ShapeProfile,
}


@dataclass(frozen=True)
class CellFailure:
    subject_id: str
    item_id: int
    reason: str


@dataclass(frozen=True, eq=False)
class SimulationRun:
    matrix: ResponseMatrix
    failures: tuple[CellFailure, ...]
    n_requests: int


def _ask(responder, prompt: str, cfg: SimulationConfig) -> tuple[str | None, str | None, int]:
    attempts = 0
    while True:
        attempts += 1
        try:
            return responder.complete(prompt, cfg.temperature), None, attempts
        except ResponderError as exc:
            if attempts > cfg.max_retries:
                return None, str(exc), attempts
            time.sleep(cfg.backoff * 2 ** (attempts - 1))


def run_simulation(
    profiles: Sequence[Profile],
    spec: ScaleSpec,
    cfg: SimulationConfig,
    responder: Responder,
    omit: Iterable[int] = (),
) -> SimulationRun:
    """Ask the responder every scale item for every profile; returns raw-coded answers."""
    if not profiles:
        raise ConfigError("no profiles to simulate")
    expected = _PROFILE_TYPES[cfg.method]
    for prof in profiles:
        if not isinstance(prof, expected):
            raise ConfigError(f"method {cfg.method.value} expects {expected.__name__} profiles")
    ids = [p.subject_id for p in profiles]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate subject ids among profiles")
    omit = tuple(omit)

    jobs = []
    for row, prof in enumerate(profiles):
        d = render_description(prof, omit)
        for col, item in enumerate(spec.items):
            jobs.append((row, col, build_prompt(d, item, spec.likert)))

    def work(job):
        row, col, prompt = job
        reply, err, attempts = _ask(responder, prompt, cfg)
        return row, col, reply, err, attempts

    workers = cfg.max_parallel if getattr(responder, "concurrent_safe", False) else 1
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(j) for j in jobs]

    values = np.full((len(profiles), len(spec.items)), np.nan)
    failures = []
    n_requests = 0
    for row, col, reply, err, attempts in results:
        n_requests += attempts
        if err is not None:
            failures.append(CellFailure(ids[row], spec.items[col].id, f"responder: {err}"))
            continue
        try:
            values[row, col] = parse_likert_response(reply, spec.likert)
        except UnparseableResponseError as exc:
            failures.append(CellFailure(ids[row], spec.items[col].id, f"unparseable: {exc}"))
    if failures and all(f.reason.startswith("responder:") for f in failures) and len(failures) == values.size:
        raise ResponderError("responder failed on every request")
    if failures:
        log.warning("%d of %d cells could not be filled", len(failures), values.size)
    matrix = ResponseMatrix(tuple(ids), spec.item_ids, values, Coding.RAW, spec.likert)
    return SimulationRun(matrix, tuple(failures), n_requests)


def write_matrix_csv(matrix: ResponseMatrix, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id"] + [f"Item{i}" for i in matrix.item_ids])
        for sid, row in zip(matrix.subject_ids, matrix.values):
            w.writerow([sid] + ["" if np.isnan(v) else str(int(v)) for v in row])


# ---------------------------------------------------------------- profile files


def _read_rows(path) -> tuple[list[str], list[dict]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            rows = list(reader)
            return list(reader.fieldnames or []), rows
    except (OSError, csv.Error, UnicodeDecodeError) as exc:
        raise CsvError(f"cannot read {path}: {exc}") from exc


def _subject_id(row: dict, k: int) -> str:
    for key in ("id", "ID", "subject_id"):
        if row.get(key):
            return row[key]
    return str(k)


def load_transcripts(path) -> list[InterviewTranscript]:
    header, rows = _read_rows(path)
    needed = [f"Q{k}" for k in range(1, N_PSI_QUESTIONS + 1)]
    missing = [c for c in needed if c not in header]
    if missing:
        raise HeaderError(f"{path}: missing interview columns {missing[:3]}...")
    return [
        InterviewTranscript.from_answers(_subject_id(r, k), [r[c] or "NA" for c in needed])
        for k, r in enumerate(rows, start=1)
    ]


def load_personas(path) -> list[PersonaProfile]:
    header, rows = _read_rows(path)
    needed = [f"Sentence{k}" for k in range(1, 6)]
    if any(c not in header for c in needed):
        raise HeaderError(f"{path}: persona files need columns {', '.join(needed)}")
    return [
        PersonaProfile(_subject_id(r, k), tuple(r[c] for c in needed))
        for k, r in enumerate(rows, start=1)
    ]


def load_shapes(path) -> list[ShapeProfile]:
    header, rows = _read_rows(path)
    needed = [f"{side}{k}" for k in range(1, 6) for side in ("Low", "High")] + ["Level"]
    if any(c not in header for c in needed):
        raise HeaderError(f"{path}: shape files need columns Low1,High1,...,Low5,High5,Level")
    out = []
    for k, r in enumerate(rows, start=1):
        try:
            level = int(r["Level"])
        except ValueError as exc:
            raise CsvError(f"{path}: row {k} has a non-integer Level") from exc
        markers = tuple((r[f"Low{i}"], r[f"High{i}"]) for i in range(1, 6))
        out.append(ShapeProfile(_subject_id(r, k), markers, level))
    return out
