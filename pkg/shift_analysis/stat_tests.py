"""Permutation tests over divergence statistics, correlations and OLS."""
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional

import numpy as np
from scipy.special import betainc
from scipy.stats import rankdata

from database.models import CorrelationReport, DivergenceSettings, Estimator, PermutationTestResult
from shift_analysis.divergence import (as_sample_set, energy_distance, knn_kl,
                                       median_heuristic_bandwidth, mmd_rbf)
from shift_analysis.pca import pca_fit, pca_project
from utils.errors import EstimatorError, PermutationError, ValidationError
from utils.logger import logger

# statistic(A, B, seed) -> float
Statistic = Callable[[np.ndarray, np.ndarray, int], float]

PERFECT_CORRELATION = 1.0 - 1e-13


def _child_seed(seed: int, b: int) -> int:
    return int(np.random.SeedSequence([seed, b]).generate_state(1)[0])


def permutation_test(X, Y, statistic: Statistic, B: int, seed: int,
                     statistic_kind: str = "custom", workers: int = 1,
                     null_statistic: Optional[Statistic] = None) -> PermutationTestResult:
    """Two-sample permutation test with balanced splits of the pooled set.

    The observed statistic uses the full sets. Each permutation draws
    ``s = min(n_X, n_Y)`` points per side without replacement from the pool;
    leftover points sit out that permutation. ``null_statistic`` (default:
    ``statistic``) evaluates the permuted splits, e.g. with a smaller pair
    budget.
    """
    null_statistic = null_statistic or statistic
    if B < 1:
        raise ValidationError("Number of permutations must be at least 1")
    X, Y = as_sample_set(X), as_sample_set(Y)
    if X.d != Y.d:
        raise EstimatorError(f"Dimension mismatch: {X.d} vs {Y.d}")
    s = min(X.n, Y.n)
    pool = np.vstack([X.data, Y.data])
    if pool.shape[0] < 2 * s:
        raise ValidationError(f"Pool of {pool.shape[0]} points cannot host two groups of {s}")

    observed = float(statistic(X.data, Y.data, seed))

    def one(b):
        rng = np.random.default_rng(np.random.SeedSequence([seed, b]))
        order = rng.permutation(pool.shape[0])
        try:
            return float(null_statistic(pool[order[:s]], pool[order[s:2 * s]], _child_seed(seed, b)))
        except Exception as e:
            raise PermutationError(f"Statistic failed at permutation {b}: {e}", permutation=b) from e

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            null = list(executor.map(one, range(B)))
    else:
        null = [one(b) for b in range(B)]

    exceed = sum(1 for value in null if value >= observed)
    p_value = (exceed + 1) / (B + 1)
    logger.log_test(statistic_kind, observed, p_value, B)
    return PermutationTestResult(observed=observed, null_samples=null, p_value=p_value,
                                 B=B, seed=seed, statistic_kind=statistic_kind)


def make_statistic(kind, pair_budget: int, bandwidth: Optional[float] = None, k: int = 5,
                   pca_components: int = 2, jitter: bool = False) -> Statistic:
    """Seed-aware divergence statistic for permutation testing.

    The MMD bandwidth must be fixed beforehand; the KL statistic refits PCA
    on its first argument and projects both.
    """
    kind = Estimator(kind)
    if kind == Estimator.ED:
        def statistic(A, B, seed):
            return energy_distance(A, B, pair_budget, seed).value
    elif kind == Estimator.MMD2:
        if bandwidth is None:
            raise ValidationError("MMD statistic needs a bandwidth fixed from the reference set")

        def statistic(A, B, seed):
            return mmd_rbf(A, B, bandwidth, pair_budget, seed).value
    else:
        def statistic(A, B, seed):
            model = pca_fit(A, pca_components)
            return knn_kl(pca_project(model, A), pca_project(model, B), k,
                          jitter_seed=seed if jitter else None).value
    return statistic


def divergence_test(X, Y, kind, settings: DivergenceSettings, B: int, seed: int,
                    permutation_budget: Optional[int] = None, workers: int = 1,
                    jitter: bool = False) -> PermutationTestResult:
    """Permutation test of one estimator with X as the reference set"""
    kind = Estimator(kind)
    bandwidth = None
    if kind == Estimator.MMD2:
        bandwidth = median_heuristic_bandwidth(X, settings.median_subsample, seed)
    observed_stat = make_statistic(kind, settings.pair_budget, bandwidth, settings.k,
                                   settings.pca_components, jitter)
    null_stat = make_statistic(kind, permutation_budget or settings.pair_budget, bandwidth,
                               settings.k, settings.pca_components, jitter)
    return permutation_test(X, Y, observed_stat, B, seed, kind.value, workers,
                            null_statistic=null_stat)


def student_t_sf(t: float, df: float) -> float:
    """Upper tail P(T > t) of Student's t via the regularised incomplete beta"""
    if df <= 0:
        raise ValidationError("Degrees of freedom must be positive")
    tail = 0.5 * float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return tail if t >= 0 else 1.0 - tail


def _paired(x, y, min_n=3):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValidationError(f"Length mismatch: {x.size} vs {y.size}")
    if x.size < min_n:
        raise ValidationError(f"Need at least {min_n} paired observations, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("Paired observations must be finite")
    return x, y


def _correlation(x, y):
    xc = x - x.mean()
    yc = y - y.mean()
    sxx, syy = float(np.dot(xc, xc)), float(np.dot(yc, yc))
    if sxx == 0 or syy == 0:
        raise ValidationError("Correlation is undefined for a constant vector")
    r = float(np.clip(np.dot(xc, yc) / np.sqrt(sxx * syy), -1.0, 1.0))
    n = x.size
    if abs(r) >= PERFECT_CORRELATION:
        return float(np.sign(r)), 0.0
    t = r * np.sqrt((n - 2) / (1.0 - r * r))
    p = min(1.0, 2.0 * student_t_sf(abs(t), n - 2))
    return r, p


def pearson(x, y):
    """(r, two-tailed p) with the t-test on n - 2 degrees of freedom"""
    return _correlation(*_paired(x, y))


def average_ranks(values) -> np.ndarray:
    return rankdata(values, method='average')


def spearman(x, y):
    """Pearson correlation of average ranks"""
    x, y = _paired(x, y)
    return _correlation(average_ranks(x), average_ranks(y))


def ols_fit(x, y):
    """Least-squares (slope, intercept)"""
    x, y = _paired(x, y, min_n=2)
    xc = x - x.mean()
    sxx = float(np.dot(xc, xc))
    if sxx == 0:
        raise ValidationError("OLS needs a non-constant regressor")
    slope = float(np.dot(xc, y - y.mean()) / sxx)
    return slope, float(y.mean() - slope * x.mean())


def correlation_report(x, y) -> CorrelationReport:
    r, rp = pearson(x, y)
    rho, sp = spearman(x, y)
    slope, intercept = ols_fit(x, y)
    return CorrelationReport(pearson_r=r, pearson_p=rp, spearman_rho=rho, spearman_p=sp,
                             ols_slope=slope, ols_intercept=intercept, n=len(np.ravel(x)))
