"""Hierarchical scale definitions, reverse coding and item -> facet -> domain scoring."""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from typing import Sequence

import jsonschema
import numpy as np

from .errors import (
    AlreadyCodedError,
    CodingError,
    DuplicateIdError,
    EmptyAfterDeletionError,
    RangeError,
    SchemaError,
    ShapeError,
    UnresolvedReferenceError,
)

SCALE_SCHEMA = {
    "type": "object",
    "required": ["name", "likert", "items", "facets", "domains"],
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "version": {"type": "string"},
        "likert": {
            "type": "object",
            "required": ["min", "max"],
            "properties": {"min": {"type": "integer"}, "max": {"type": "integer"}},
        },
        "items": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "text", "reverse"],
                "properties": {
                    "id": {"type": "integer", "minimum": 1},
                    "text": {"type": "string", "minLength": 1},
                    "reverse": {"type": "boolean"},
                },
            },
        },
        "facets": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["name", "items"],
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "items": {"type": "array", "minItems": 1, "items": {"type": "integer"}},
                },
            },
        },
        "domains": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["name", "facets"],
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "facets": {"type": "array", "minItems": 1, "items": {"type": "string"}},
                },
            },
        },
    },
}


@dataclass(frozen=True)
class LikertScale:
    min: int
    max: int

    def __post_init__(self):
        if not (isinstance(self.min, int) and isinstance(self.max, int)):
            raise SchemaError("Likert anchors must be integers")
        if self.min < 1 or self.min >= self.max:
            raise SchemaError(f"invalid Likert range {self.min}..{self.max}")

    def contains(self, value) -> bool:
        return self.min <= value <= self.max

    @property
    def n_points(self) -> int:
        return self.max - self.min + 1


@dataclass(frozen=True)
class ItemDef:
    id: int
    text: str
    reverse: bool = False


@dataclass(frozen=True)
class FacetDef:
    name: str
    item_ids: tuple[int, ...]


@dataclass(frozen=True)
class DomainDef:
    name: str
    facet_names: tuple[str, ...]
    item_ids: tuple[int, ...]


@dataclass(frozen=True)
class ScaleSpec:
    """A validated scale: every item in one facet, every facet in one domain."""

    name: str
    likert: LikertScale
    items: tuple[ItemDef, ...]
    facets: tuple[FacetDef, ...]
    domains: tuple[DomainDef, ...]
    version: str = ""

    def __post_init__(self):
        _validate(self)

    @cached_property
    def item_ids(self) -> tuple[int, ...]:
        return tuple(item.id for item in self.items)

    @cached_property
    def reverse_ids(self) -> frozenset[int]:
        return frozenset(item.id for item in self.items if item.reverse)

    def item(self, item_id: int) -> ItemDef:
        for item in self.items:
            if item.id == item_id:
                return item
        raise KeyError(item_id)

    def facet(self, name: str) -> FacetDef:
        for facet in self.facets:
            if facet.name == name:
                return facet
        raise KeyError(name)

    def domain(self, name: str) -> DomainDef:
        for domain in self.domains:
            if domain.name == name:
                return domain
        raise KeyError(name)

    @property
    def facet_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.facets)

    @property
    def domain_names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.domains)

    def to_document(self) -> dict:
        doc = {
            "name": self.name,
            "likert": {"min": self.likert.min, "max": self.likert.max},
            "items": [{"id": i.id, "text": i.text, "reverse": i.reverse} for i in self.items],
            "facets": [{"name": f.name, "items": list(f.item_ids)} for f in self.facets],
            "domains": [{"name": d.name, "facets": list(d.facet_names)} for d in self.domains],
        }
        if self.version:
            doc["version"] = self.version
        return doc


def _validate(spec: ScaleSpec) -> None:
    ids = [item.id for item in spec.items]
    if len(set(ids)) != len(ids):
        raise DuplicateIdError(f"duplicate item ids in scale {spec.name!r}")
    facet_names = [f.name for f in spec.facets]
    if len(set(facet_names)) != len(facet_names):
        raise DuplicateIdError("duplicate facet names")
    domain_names = [d.name for d in spec.domains]
    if len(set(domain_names)) != len(domain_names):
        raise DuplicateIdError("duplicate domain names")

    known = set(ids)
    owner: dict[int, str] = {}
    for facet in spec.facets:
        if len(set(facet.item_ids)) != len(facet.item_ids):
            raise DuplicateIdError(f"facet {facet.name!r} lists an item twice")
        for item_id in facet.item_ids:
            if item_id not in known:
                raise UnresolvedReferenceError(
                    f"facet {facet.name!r} cites unknown item {item_id}"
                )
            if item_id in owner:
                raise DuplicateIdError(
                    f"item {item_id} belongs to facets {owner[item_id]!r} and {facet.name!r}"
                )
            owner[item_id] = facet.name
    orphans = known - set(owner)
    if orphans:
        raise SchemaError(f"items without a facet: {sorted(orphans)}")

    facet_owner: dict[str, str] = {}
    for domain in spec.domains:
        for name in domain.facet_names:
            if name not in facet_names:
                raise UnresolvedReferenceError(
                    f"domain {domain.name!r} cites unknown facet {name!r}"
                )
            if name in facet_owner:
                raise DuplicateIdError(
                    f"facet {name!r} belongs to domains {facet_owner[name]!r} and {domain.name!r}"
                )
            facet_owner[name] = domain.name
    orphan_facets = set(facet_names) - set(facet_owner)
    if orphan_facets:
        raise SchemaError(f"facets without a domain: {sorted(orphan_facets)}")


def parse_scale_spec(doc) -> ScaleSpec:
    """Build a `ScaleSpec` from a JSON document (str, bytes or already-decoded dict)."""
    if isinstance(doc, (bytes, bytearray)):
        doc = doc.decode("utf-8")
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(doc, SCALE_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise SchemaError(exc.message) from exc

    likert = LikertScale(doc["likert"]["min"], doc["likert"]["max"])
    items = tuple(ItemDef(it["id"], it["text"], it["reverse"]) for it in doc["items"])
    facets = tuple(FacetDef(f["name"], tuple(f["items"])) for f in doc["facets"])
    facet_items = {f.name: f.item_ids for f in facets}
    domains = []
    for d in doc["domains"]:
        for name in d["facets"]:
            if name not in facet_items:
                raise UnresolvedReferenceError(f"domain {d['name']!r} cites unknown facet {name!r}")
        item_ids = tuple(i for name in d["facets"] for i in facet_items[name])
        domains.append(DomainDef(d["name"], tuple(d["facets"]), item_ids))
    return ScaleSpec(
        name=doc["name"],
        likert=likert,
        items=items,
        facets=facets,
        domains=tuple(domains),
        version=doc.get("version", ""),
    )


def load_scale_spec(path) -> ScaleSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_scale_spec(fh.read())


def bfi2() -> ScaleSpec:
    """The bundled 60-item BFI-2 definition."""
    text = resources.files("psyeval.data").joinpath("bfi2.json").read_text(encoding="utf-8")
    return parse_scale_spec(text)


def reverse_code(value, likert: LikertScale):
    if not likert.contains(value):
        raise RangeError(f"{value} outside {likert.min}..{likert.max}")
    return likert.min + likert.max - value


class Coding(enum.Enum):
    RAW = "raw"
    REVERSE_APPLIED = "reversed"


@dataclass(frozen=True, eq=False)
class ResponseMatrix:
    """Subjects x items responses. Missing cells are NaN."""

    subject_ids: tuple
    item_ids: tuple[int, ...]
    values: np.ndarray
    coding: Coding = Coding.RAW
    likert: LikertScale | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape != (len(self.subject_ids), len(self.item_ids)):
            raise ShapeError(
                f"values shape {values.shape} does not match "
                f"{len(self.subject_ids)} subjects x {len(self.item_ids)} items"
            )
        if len(set(self.item_ids)) != len(self.item_ids):
            raise DuplicateIdError("duplicate item columns")
        if self.likert is not None:
            bad = ~np.isnan(values) & ((values < self.likert.min) | (values > self.likert.max))
            if bad.any():
                r, c = map(int, np.argwhere(bad)[0])
                raise RangeError(
                    f"value {values[r, c]:g} at row {r + 1}, item {self.item_ids[c]} "
                    f"outside {self.likert.min}..{self.likert.max}",
                    row=r + 1,
                    column=self.item_ids[c],
                )
        values.setflags(write=False)
        object.__setattr__(self, "subject_ids", tuple(self.subject_ids))
        object.__setattr__(self, "item_ids", tuple(self.item_ids))
        object.__setattr__(self, "values", values)

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def column(self, item_id: int) -> np.ndarray:
        return self.values[:, self.item_ids.index(item_id)]

    def take_items(self, item_ids: Sequence[int]) -> np.ndarray:
        try:
            cols = [self.item_ids.index(i) for i in item_ids]
        except ValueError as exc:
            raise ShapeError(f"matrix lacks an item column: {exc}") from exc
        return self.values[:, cols]

    def take_rows(self, rows) -> "ResponseMatrix":
        rows = np.asarray(rows)
        return ResponseMatrix(
            tuple(self.subject_ids[i] for i in rows),
            self.item_ids,
            self.values[rows],
            self.coding,
            self.likert,
        )


def apply_reverse_coding(matrix: ResponseMatrix, spec: ScaleSpec) -> ResponseMatrix:
    if matrix.coding is Coding.REVERSE_APPLIED:
        raise AlreadyCodedError("reverse coding has already been applied")
    values = matrix.values.copy()
    lo, hi = spec.likert.min, spec.likert.max
    for col, item_id in enumerate(matrix.item_ids):
        if item_id in spec.reverse_ids:
            # NaN stays NaN
            values[:, col] = lo + hi - values[:, col]
    return ResponseMatrix(
        matrix.subject_ids, matrix.item_ids, values, Coding.REVERSE_APPLIED, matrix.likert
    )


class MissingPolicy(enum.Enum):
    LISTWISE_DELETE = "listwise"
    MEAN_IF_AT_MOST_ONE_MISSING = "mean1"


@dataclass(frozen=True, eq=False)
class ScoredSample:
    subject_ids: tuple
    item_ids: tuple[int, ...]
    facet_names: tuple[str, ...]
    domain_names: tuple[str, ...]
    item_scores: np.ndarray
    facet_scores: np.ndarray
    domain_scores: np.ndarray

    def level(self, name: str) -> tuple[tuple, np.ndarray]:
        """Unit labels and score grid for 'item', 'facet' or 'domain'."""
        if name == "item":
            return tuple(f"Item{i}" for i in self.item_ids), self.item_scores
        if name == "facet":
            return self.facet_names, self.facet_scores
        if name == "domain":
            return self.domain_names, self.domain_scores
        raise ValueError(f"unknown level {name!r}")


LEVELS = ("item", "facet", "domain")


def score(
    matrix: ResponseMatrix,
    spec: ScaleSpec,
    missing_policy: MissingPolicy = MissingPolicy.LISTWISE_DELETE,
) -> ScoredSample:
    if matrix.coding is not Coding.REVERSE_APPLIED:
        raise CodingError("score() needs reverse-coded responses; call apply_reverse_coding first")
    items = matrix.take_items(spec.item_ids)
    missing = np.isnan(items)
    col = {item_id: k for k, item_id in enumerate(spec.item_ids)}

    if missing_policy is MissingPolicy.LISTWISE_DELETE:
        keep = ~missing.any(axis=1)
        items = items[keep]
        facet_scores = np.column_stack(
            [items[:, [col[i] for i in f.item_ids]].mean(axis=1) for f in spec.facets]
        ) if keep.any() else np.empty((0, len(spec.facets)))
    else:
        facet_cols = []
        keep = np.ones(items.shape[0], dtype=bool)
        for f in spec.facets:
            block = items[:, [col[i] for i in f.item_ids]]
            n_missing = np.isnan(block).sum(axis=1)
            keep &= (n_missing <= 1) & (n_missing < block.shape[1])
            present = np.where(np.isnan(block), 0.0, block)
            with np.errstate(invalid="ignore", divide="ignore"):
                facet_cols.append(present.sum(axis=1) / (block.shape[1] - n_missing))
        items = items[keep]
        facet_scores = np.column_stack(facet_cols)[keep]

    if not keep.any():
        raise EmptyAfterDeletionError("no subject left after missing-data handling")

    facet_index = {f.name: k for k, f in enumerate(spec.facets)}
    if missing_policy is MissingPolicy.LISTWISE_DELETE:
        domain_scores = np.column_stack(
            [items[:, [col[i] for i in d.item_ids]].mean(axis=1) for d in spec.domains]
        )
    else:
        domain_scores = np.column_stack(
            [facet_scores[:, [facet_index[n] for n in d.facet_names]].mean(axis=1) for d in spec.domains]
        )
    subject_ids = tuple(s for s, k in zip(matrix.subject_ids, keep) if k)
    return ScoredSample(
        subject_ids=subject_ids,
        item_ids=spec.item_ids,
        facet_names=spec.facet_names,
        domain_names=spec.domain_names,
        item_scores=items,
        facet_scores=facet_scores,
        domain_scores=domain_scores,
    )
