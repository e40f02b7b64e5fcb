"""Descriptive statistics and agreement metrics between two samples."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateInputError,
    InsufficientDataError,
    LengthMismatchError,
    ShapeError,
)


@dataclass(frozen=True)
class DescriptiveSummary:
    mu: float
    sigma: float
    skewness: float | None  # None when the sample has zero variance
    excess_kurtosis: float | None
    n: int


@dataclass(frozen=True)
class AlignmentPair:
    mae: float
    r: float
    n: int


def _vector(x, name="x") -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be one-dimensional")
    return arr


def _pair(x, y, min_len):
    x, y = _vector(x, "x"), _vector(y, "y")
    if x.shape != y.shape:
        raise LengthMismatchError(f"lengths differ: {x.size} vs {y.size}")
    if x.size < min_len:
        raise InsufficientDataError(f"need at least {min_len} paired values, got {x.size}")
    return x, y


def describe(values) -> DescriptiveSummary:
    x = _vector(values)
    n = x.size
    if n < 2:
        raise InsufficientDataError("describe() needs at least two values")
    if np.isnan(x).any():
        raise InsufficientDataError("describe() does not accept missing values")
    mu = float(x.mean())
    d = x - mu
    m2 = float(np.mean(d**2))
    sigma = math.sqrt(float(np.sum(d**2)) / (n - 1))
    if m2 <= 0.0 or sigma <= 1e-14 * max(1.0, abs(mu)):
        return DescriptiveSummary(mu, 0.0 if m2 <= 0.0 else sigma, None, None, n)
    m3 = float(np.mean(d**3))
    m4 = float(np.mean(d**4))
    return DescriptiveSummary(mu, sigma, m3 / m2**1.5, m4 / m2**2 - 3.0, n)


def pearson_r(x, y) -> float:
    x, y = _pair(x, y, 2)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateInputError("correlation undefined for a constant vector")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def mae(x, y) -> float:
    x, y = _pair(x, y, 1)
    return float(np.mean(np.abs(x - y)))


def align(x, y) -> AlignmentPair:
    """MAE and Pearson r between paired vectors."""
    return AlignmentPair(mae(x, y), pearson_r(x, y), len(x))


def hai(sigma_human, sigma_model) -> float:
    """Heterogeneity alignment: Pearson correlation of two standard-deviation profiles."""
    return pearson_r(sigma_human, sigma_model)


def sd_profile(scores) -> np.ndarray:
    """Column sample standard deviations (n-1)."""
    return np.asarray(scores, dtype=float).std(axis=0, ddof=1)


def cronbach_alpha(item_scores) -> float:
    grid = np.asarray(item_scores, dtype=float)
    if grid.ndim != 2:
        raise ShapeError("item_scores must be a subjects x items grid")
    n, k = grid.shape
    if k < 2 or n < 2:
        raise InsufficientDataError(f"alpha needs k >= 2 items and n >= 2 subjects, got {n}x{k}")
    total_var = grid.sum(axis=1).var(ddof=1)
    if total_var == 0.0:
        raise DegenerateInputError("total score has zero variance")
    item_var = grid.var(axis=0, ddof=1).sum()
    return float(k / (k - 1) * (1.0 - item_var / total_var))


def r_squared(simulated, human) -> float:
    """Coefficient of determination of the least-squares line predicting human from simulated."""
    x, y = _pair(simulated, human, 3)
    dx = x - x.mean()
    dy = y - y.mean()
    ss_tot = float(dy @ dy)
    if ss_tot == 0.0:
        raise DegenerateInputError("human reference is constant")
    sxx = float(dx @ dx)
    if sxx == 0.0:
        # a flat predictor explains nothing
        return 0.0
    slope = float(dx @ dy) / sxx
    fit = y.mean() + slope * dx
    return 1.0 - float(np.sum((y - fit) ** 2)) / ss_tot


def correlation_matrix(scores, names=None) -> np.ndarray:
    grid = np.asarray(scores, dtype=float)
    if grid.ndim != 2:
        raise ShapeError("scores must be two-dimensional")
    n, m = grid.shape
    if n < 3:
        raise InsufficientDataError("correlation matrix needs at least 3 subjects")
    sd = grid.std(axis=0)
    flat = np.flatnonzero(sd == 0.0)
    if flat.size:
        label = names[flat[0]] if names is not None else int(flat[0])
        raise DegenerateInputError(f"column {label} is constant")
    centered = grid - grid.mean(axis=0)
    cross = centered.T @ centered
    norms = np.sqrt(np.diag(cross))
    corr = cross / np.outer(norms, norms)
    corr = np.clip((corr + corr.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return corr


def discriminant_mean_abs(corr) -> float:
    """Mean absolute off-diagonal correlation (upper triangle)."""
    c = np.asarray(corr, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 2:
        raise ShapeError("expected a square matrix of size >= 2")
    if not np.allclose(c, c.T, atol=1e-12) or not np.allclose(np.diag(c), 1.0, atol=1e-12):
        raise ShapeError("expected a symmetric matrix with unit diagonal")
    iu = np.triu_indices(c.shape[0], k=1)
    return float(np.mean(np.abs(c[iu])))
