"""Maximum-likelihood confirmatory factor analysis for simple-structure models.

Parameterization: factor variances fixed at 1 (Phi holds correlations),
error variances on a log scale, factor correlations unconstrained.
The parameter vector is ``[loadings (p), log error variances (p), phi (k)]``
where the k free correlations follow ``np.triu_indices(m, 1)`` order.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, InsufficientDataError, NumericalError, PdError, SpecError
from .scale import DomainDef, ScaleSpec


class FitWarning(str, enum.Enum):
    NON_POSITIVE_DEFINITE_PHI = "NonPositiveDefinitePhi"
    BOUNDARY_ERROR_VARIANCE = "BoundaryErrorVariance"
    NOT_CONVERGED = "NotConverged"


@dataclass(frozen=True, eq=False)
class CfaModelSpec:
    indicator_names: tuple[str, ...]
    factor_names: tuple[str, ...]
    pattern: np.ndarray
    free_factor_correlations: bool = True

    def __post_init__(self):
        pattern = np.array(self.pattern, dtype=bool)
        p, m = len(self.indicator_names), len(self.factor_names)
        if pattern.shape != (p, m):
            raise SpecError(f"pattern shape {pattern.shape} != ({p}, {m})")
        per_row = pattern.sum(axis=1)
        if not np.all(per_row == 1):
            bad = self.indicator_names[int(np.flatnonzero(per_row != 1)[0])]
            raise SpecError(f"indicator {bad!r} must load on exactly one factor")
        min_ind = 3 if m == 1 else 2
        per_col = pattern.sum(axis=0)
        if np.any(per_col < min_ind):
            bad = self.factor_names[int(np.argmin(per_col))]
            raise SpecError(f"factor {bad!r} has fewer than {min_ind} indicators")
        pattern.setflags(write=False)
        object.__setattr__(self, "pattern", pattern)
        object.__setattr__(self, "indicator_names", tuple(self.indicator_names))
        object.__setattr__(self, "factor_names", tuple(self.factor_names))

    @property
    def p(self) -> int:
        return len(self.indicator_names)

    @property
    def m(self) -> int:
        return len(self.factor_names)

    @property
    def factor_of(self) -> np.ndarray:
        return self.pattern.argmax(axis=1)

    @property
    def n_correlations(self) -> int:
        return self.m * (self.m - 1) // 2 if self.free_factor_correlations else 0

    @property
    def n_free(self) -> int:
        return 2 * self.p + self.n_correlations

    @property
    def df(self) -> int:
        return self.p * (self.p + 1) // 2 - self.n_free


def build_tfm_spec(domain: DomainDef, scale: ScaleSpec) -> CfaModelSpec:
    """Facets of one domain as correlated factors, its items as indicators."""
    if len(domain.facet_names) < 2:
        raise SpecError(f"domain {domain.name!r} needs at least 2 facets for a facet-factor model")
    facets = [scale.facet(name) for name in domain.facet_names]
    item_ids = [i for f in facets for i in f.item_ids]
    item_ids.sort()
    pattern = np.zeros((len(item_ids), len(facets)), dtype=bool)
    for j, f in enumerate(facets):
        if len(f.item_ids) < 2:
            raise SpecError(f"facet {f.name!r} needs at least 2 items")
        for i in f.item_ids:
            pattern[item_ids.index(i), j] = True
    return CfaModelSpec(
        tuple(f"Item{i}" for i in item_ids), tuple(domain.facet_names), pattern, True
    )


def build_ffm_spec(scale: ScaleSpec) -> CfaModelSpec:
    """Facet scores as indicators of correlated domain factors."""
    if len(scale.domains) < 2:
        raise SpecError("a domain-level model needs at least 2 domains")
    names = list(scale.facet_names)
    pattern = np.zeros((len(names), len(scale.domains)), dtype=bool)
    for j, d in enumerate(scale.domains):
        if len(d.facet_names) < 2:
            raise SpecError(f"domain {d.name!r} needs at least 2 facets")
        for f in d.facet_names:
            pattern[names.index(f), j] = True
    return CfaModelSpec(tuple(names), scale.domain_names, pattern, True)


@dataclass(frozen=True, eq=False)
class CovarianceInput:
    S: np.ndarray
    N: int
    variable_names: tuple[str, ...] = ()

    def __post_init__(self):
        S = np.array(self.S, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ArgumentError("covariance matrix must be square")
        if not np.allclose(S, S.T, rtol=0, atol=1e-10 * max(1.0, float(np.abs(S).max()))):
            raise ArgumentError("covariance matrix must be symmetric")
        if np.any(np.diag(S) <= 0):
            raise ArgumentError("covariance diagonal must be strictly positive")
        S = (S + S.T) / 2.0
        S.setflags(write=False)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "variable_names", tuple(self.variable_names))

    @property
    def p(self) -> int:
        return self.S.shape[0]


def sample_covariance(scores, variable_names=()) -> CovarianceInput:
    grid = np.asarray(scores, dtype=float)
    if grid.ndim != 2:
        raise ArgumentError("scores must be a subjects x variables grid")
    n = grid.shape[0]
    if n < 2:
        raise InsufficientDataError("covariance needs at least 2 subjects")
    centered = grid - grid.mean(axis=0)
    S = centered.T @ centered / (n - 1)
    return CovarianceInput(S, n, tuple(variable_names))


# ---------------------------------------------------------------- objective


def unpack(theta, spec: CfaModelSpec):
    """Return (Lambda, Phi, psi) for a parameter vector."""
    theta = np.asarray(theta, dtype=float)
    p, m = spec.p, spec.m
    lam = np.zeros((p, m))
    lam[np.arange(p), spec.factor_of] = theta[:p]
    psi = np.exp(theta[p : 2 * p])
    phi = np.eye(m)
    if spec.free_factor_correlations and m > 1:
        iu = np.triu_indices(m, 1)
        phi[iu] = theta[2 * p :]
        phi[(iu[1], iu[0])] = theta[2 * p :]
    return lam, phi, psi


def implied_covariance(theta, spec: CfaModelSpec) -> np.ndarray:
    lam, phi, psi = unpack(theta, spec)
    sigma = lam @ phi @ lam.T
    sigma[np.diag_indices_from(sigma)] += psi
    return sigma


def _logdet_pd(a: np.ndarray) -> float | None:
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return None
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def discrepancy(theta, S, spec: CfaModelSpec) -> float:
    """F_ML; +inf where the implied covariance is not positive definite."""
    S = np.asarray(S, dtype=float)
    sigma = implied_covariance(theta, spec)
    logdet_sigma = _logdet_pd(sigma)
    logdet_s = _logdet_pd(S)
    if logdet_sigma is None:
        return math.inf
    if logdet_s is None:
        raise PdError("sample covariance is not positive definite")
    sigma_inv = np.linalg.inv(sigma)
    return logdet_sigma + float(np.sum(S * sigma_inv)) - logdet_s - spec.p


def discrepancy_gradient(theta, S, spec: CfaModelSpec) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    lam, phi, psi = unpack(theta, spec)
    sigma = lam @ phi @ lam.T
    sigma[np.diag_indices_from(sigma)] += psi
    sigma_inv = np.linalg.inv(sigma)
    g = sigma_inv @ (sigma - S) @ sigma_inv
    g = (g + g.T) / 2.0
    p = spec.p
    d_lam = 2.0 * (g @ lam @ phi)[np.arange(p), spec.factor_of]
    d_logpsi = np.diag(g) * psi
    parts = [d_lam, d_logpsi]
    if spec.n_correlations:
        iu = np.triu_indices(spec.m, 1)
        parts.append(2.0 * (lam.T @ g @ lam)[iu])
    return np.concatenate(parts)


# ---------------------------------------------------------------- optimizer


@dataclass(frozen=True)
class FitOptions:
    max_iter: int = 500
    ftol: float = 1e-9
    gtol: float = 1e-6
    boundary_tol: float = 1e-4


@dataclass
class _BfgsResult:
    x: np.ndarray
    f: float
    grad: np.ndarray
    iterations: int
    converged: bool


def _bfgs(fun, grad, x0, opts: FitOptions) -> _BfgsResult:
    x = np.array(x0, dtype=float)
    f = fun(x)
    if not math.isfinite(f):
        raise NumericalError("start values give a non positive definite implied covariance")
    g = grad(x)
    n = x.size
    H = np.eye(n)
    fresh = True
    converged = float(np.max(np.abs(g))) < opts.gtol
    it = 0
    while not converged and it < opts.max_iter:
        it += 1
        d = -H @ g
        slope = float(g @ d)
        if slope >= 0:
            H, fresh = np.eye(n), True
            d, slope = -g, -float(g @ g)
        # cap the trial step so line search starts inside a sane region
        step = min(1.0, 1.0 / max(float(np.max(np.abs(d))), 1e-300))
        f_new = fun(x + step * d)
        halvings = 0
        while not (f_new <= f + 1e-4 * step * slope) and halvings < 60:
            step *= 0.5
            halvings += 1
            f_new = fun(x + step * d)
        if not (f_new <= f + 1e-4 * step * slope):
            if fresh:
                # no descent even along -g: numerical floor
                converged = float(np.max(np.abs(g))) < 1e2 * opts.gtol
                break
            H, fresh = np.eye(n), True
            continue
        s = step * d
        x_new = x + s
        g_new = grad(x_new)
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-14 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            if fresh:
                H = np.eye(n) * sy / float(y @ y)
            rho = 1.0 / sy
            Hy = H @ y
            H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho * rho * float(y @ Hy) + rho) * np.outer(s, s)
            fresh = False
        df = abs(f - f_new)
        x, f, g = x_new, f_new, g_new
        if float(np.max(np.abs(g))) < opts.gtol:
            converged = True
        elif df <= opts.ftol * max(abs(f), abs(f + df)) and df > 0:
            converged = True
        elif df == 0.0 and np.all(s == 0):
            break
    return _BfgsResult(x, f, g, it, converged)


# ---------------------------------------------------------------- results


@dataclass(frozen=True)
class FitIndices:
    cfi: float | None
    tli: float | None
    rmsea: float | None
    srmr: float


@dataclass(frozen=True, eq=False)
class CfaFit:
    spec: CfaModelSpec
    loadings_std: np.ndarray
    factor_corr: np.ndarray
    error_var_std: np.ndarray
    loadings_raw: np.ndarray
    error_var_raw: np.ndarray
    sigma_hat: np.ndarray
    F_ml: float
    chi2: float
    df: int
    chi2_null: float
    df_null: int
    cfi: float | None
    tli: float | None
    rmsea: float | None
    srmr: float
    N: int
    converged: bool
    iterations: int
    warnings: tuple[FitWarning, ...] = field(default_factory=tuple)

    def active_loadings(self) -> np.ndarray:
        """Standardized loading of each indicator on its own factor."""
        return self.loadings_std[np.arange(self.spec.p), self.spec.factor_of]


def null_model_fit(cov: CovarianceInput) -> tuple[float, int]:
    logdet = _logdet_pd(cov.S)
    if logdet is None:
        raise PdError("sample covariance is not positive definite")
    f_null = float(np.sum(np.log(np.diag(cov.S)))) - logdet
    p = cov.p
    return (cov.N - 1) * max(f_null, 0.0), p * (p - 1) // 2


def fit_indices(chi2, df, chi2_null, df_null, N, S, Sigma_hat) -> FitIndices:
    if df < 0 or df_null <= 0 or N < 2:
        raise ArgumentError(f"invalid arguments: df={df}, df_null={df_null}, N={N}")
    num = max(chi2 - df, 0.0)
    den = max(chi2_null - df_null, 0.0)
    if den > 0:
        cfi = 1.0 - num / den
    else:
        cfi = 1.0 if num == 0 else None
    if df > 0:
        null_ratio = chi2_null / df_null
        tli = (null_ratio - chi2 / df) / (null_ratio - 1.0) if null_ratio != 1.0 else None
        rmsea = math.sqrt(max((chi2 - df) / (df * (N - 1)), 0.0))
    else:
        tli = None
        rmsea = None
    S = np.asarray(S, dtype=float)
    Sigma_hat = np.asarray(Sigma_hat, dtype=float)
    sd = np.sqrt(np.diag(S))
    resid = (S - Sigma_hat) / np.outer(sd, sd)
    p = S.shape[0]
    il = np.tril_indices(p)
    srmr = math.sqrt(float(np.sum(resid[il] ** 2)) / (p * (p + 1) / 2))
    return FitIndices(cfi, tli, rmsea, srmr)


def standardize_solution(loadings, phi, theta, sigma_hat):
    """Scale loadings and error variances to unit implied indicator variances."""
    loadings = np.asarray(loadings, dtype=float)
    implied = np.diag(np.asarray(sigma_hat, dtype=float))
    if np.any(implied <= 0):
        raise NumericalError("non-positive implied variance")
    sd = np.sqrt(implied)
    factor_sd = np.sqrt(np.diag(np.asarray(phi, dtype=float)))
    loadings_std = loadings * factor_sd[None, :] / sd[:, None]
    error_std = np.asarray(theta, dtype=float) / implied
    return loadings_std, error_std


def start_values(S, spec: CfaModelSpec) -> np.ndarray:
    diag = np.diag(np.asarray(S, dtype=float))
    parts = [0.7 * np.sqrt(diag), np.log(0.5 * diag)]
    if spec.n_correlations:
        parts.append(np.full(spec.n_correlations, 0.3))
    return np.concatenate(parts)


def fit_ml(cov: CovarianceInput, spec: CfaModelSpec, options: FitOptions | None = None) -> CfaFit:
    opts = options or FitOptions()
    if cov.p != spec.p:
        raise SpecError(f"covariance has {cov.p} variables, model has {spec.p} indicators")
    if cov.variable_names and tuple(cov.variable_names) != spec.indicator_names:
        raise SpecError("covariance variable names do not match model indicators")
    if spec.df < 0:
        raise SpecError(f"model is under-identified (df = {spec.df})")
    if _logdet_pd(cov.S) is None:
        raise PdError("sample covariance is not positive definite")

    # ML is scale invariant, so fit on the sd-rescaled matrix and map back
    sd = np.sqrt(np.diag(cov.S))
    R = cov.S / np.outer(sd, sd)
    result = _bfgs(
        lambda t: discrepancy(t, R, spec),
        lambda t: discrepancy_gradient(t, R, spec),
        start_values(R, spec),
        opts,
    )
    lam_r, phi, psi_r = unpack(result.x, spec)
    lam = lam_r * sd[:, None]
    psi = psi_r * sd**2
    sigma_hat = lam @ phi @ lam.T
    sigma_hat[np.diag_indices_from(sigma_hat)] += psi
    sigma_hat = (sigma_hat + sigma_hat.T) / 2.0

    f_ml = max(result.f, 0.0)
    chi2 = (cov.N - 1) * f_ml
    chi2_null, df_null = null_model_fit(cov)
    idx = fit_indices(chi2, spec.df, chi2_null, df_null, cov.N, cov.S, sigma_hat)
    loadings_std, error_std = standardize_solution(lam, phi, psi, sigma_hat)

    warnings = []
    if spec.m > 1:
        off = phi[~np.eye(spec.m, dtype=bool)]
        if np.any(np.abs(off) > 1.0) or np.linalg.eigvalsh(phi).min() <= 0:
            warnings.append(FitWarning.NON_POSITIVE_DEFINITE_PHI)
    if np.any(error_std < opts.boundary_tol):
        warnings.append(FitWarning.BOUNDARY_ERROR_VARIANCE)
    if not result.converged:
        warnings.append(FitWarning.NOT_CONVERGED)

    for a in (loadings_std, phi, error_std, lam, psi, sigma_hat):
        a.setflags(write=False)
    return CfaFit(
        spec=spec,
        loadings_std=loadings_std,
        factor_corr=phi,
        error_var_std=error_std,
        loadings_raw=lam,
        error_var_raw=psi,
        sigma_hat=sigma_hat,
        F_ml=f_ml,
        chi2=chi2,
        df=spec.df,
        chi2_null=chi2_null,
        df_null=df_null,
        cfi=idx.cfi,
        tli=idx.tli,
        rmsea=idx.rmsea,
        srmr=idx.srmr,
        N=cov.N,
        converged=result.converged,
        iterations=result.iterations,
        warnings=tuple(warnings),
    )
