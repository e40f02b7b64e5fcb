"""Two-component PCA fitted on the human sample; other samples are projected into it."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, RankError, ShapeError


@dataclass(frozen=True, eq=False)
class PcaBasis:
    means: np.ndarray
    components: np.ndarray  # 2 x p, orthonormal rows
    eigenvalues: np.ndarray
    level: str = ""


@dataclass(frozen=True, eq=False)
class Projection:
    coords: np.ndarray
    source: str


def fit_pca2(human_scores, level: str = "") -> PcaBasis:
    X = np.asarray(human_scores, dtype=float)
    if X.ndim != 2:
        raise ShapeError("scores must be a subjects x variables grid")
    n, p = X.shape
    if n < 3 or p < 2:
        raise InsufficientDataError(f"need n >= 3 and p >= 2, got {n} x {p}")
    means = X.mean(axis=0)
    centered = X - means
    cov = centered.T @ centered / (n - 1)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1][:2]
    vals = np.clip(vals[order], 0.0, None)
    comps = vecs[:, order].T.copy()
    if vals[0] <= 0 or vals[1] <= vals[0] * p * np.finfo(float).eps:
        raise RankError("human covariance has rank < 2")
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    for a in (means, comps, vals):
        a.setflags(write=False)
    return PcaBasis(means, comps, vals, level)


def project(basis: PcaBasis, scores, source: str = "") -> Projection:
    X = np.asarray(scores, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != basis.means.size:
        raise ShapeError(f"expected {basis.means.size} columns, got {X.shape[1]}")
    return Projection((X - basis.means) @ basis.components.T, source)
