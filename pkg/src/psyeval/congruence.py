"""Comparing two factor solutions fitted under the same confirmatory pattern."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .cfa import CfaFit
from .errors import LengthMismatchError, ShapeError, ZeroVectorError


class TccBand(str, enum.Enum):
    GOOD = "Good"
    FAIR = "Fair"
    LOW = "Low"


def tcc(a, b) -> float:
    """Tucker's congruence coefficient (uncentered cosine)."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape or a.size == 0:
        raise LengthMismatchError(f"lengths differ or empty: {a.size} vs {b.size}")
    saa = float(a @ a)
    sbb = float(b @ b)
    if saa == 0.0 or sbb == 0.0:
        raise ZeroVectorError("congruence undefined for an all-zero loading vector")
    return float(a @ b) / math.sqrt(saa * sbb)


def band_tcc(phi: float) -> TccBand:
    if phi >= 0.95:
        return TccBand.GOOD
    if phi >= 0.85:
        return TccBand.FAIR
    return TccBand.LOW


def loading_mae(L1, L2, pattern=None) -> np.ndarray:
    """Per-factor mean absolute loading difference over pattern-active cells.

    Without an explicit pattern, a cell is active when either solution has a
    non-zero loading there.
    """
    L1 = np.asarray(L1, dtype=float)
    L2 = np.asarray(L2, dtype=float)
    if L1.ndim != 2 or L1.shape != L2.shape:
        raise ShapeError(f"loading matrices differ in shape: {L1.shape} vs {L2.shape}")
    active = (L1 != 0) | (L2 != 0) if pattern is None else np.asarray(pattern, dtype=bool)
    if active.shape != L1.shape:
        raise ShapeError("pattern shape does not match loadings")
    out = np.empty(L1.shape[1])
    for j in range(L1.shape[1]):
        cells = active[:, j]
        out[j] = np.mean(np.abs(L1[cells, j] - L2[cells, j])) if cells.any() else 0.0
    return out


@dataclass(frozen=True)
class FactorComparison:
    factor: str
    phi: float | None
    loading_mae: float
    band: TccBand | None


@dataclass(frozen=True)
class CongruenceReport:
    per_factor: tuple[FactorComparison, ...]


def compare_fits(reference: CfaFit, other: CfaFit) -> CongruenceReport:
    """Factor-by-factor congruence of two fits of one model, matched by position."""
    spec = reference.spec
    if other.spec.pattern.shape != spec.pattern.shape or not np.array_equal(
        other.spec.pattern, spec.pattern
    ):
        raise ShapeError("fits were estimated under different patterns")
    maes = loading_mae(reference.loadings_std, other.loadings_std, spec.pattern)
    rows = []
    for j, name in enumerate(spec.factor_names):
        cells = spec.pattern[:, j]
        try:
            phi = tcc(reference.loadings_std[cells, j], other.loadings_std[cells, j])
        except ZeroVectorError:
            phi = None
        rows.append(
            FactorComparison(name, phi, float(maes[j]), band_tcc(phi) if phi is not None else None)
        )
    return CongruenceReport(tuple(rows))
