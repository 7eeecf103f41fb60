"""Energy distance, RBF-kernel MMD and kNN-KL between two sample sets.

ED and MMD² estimate each expectation from ``pair_budget`` random index
pairs. Within-set pairs always use distinct indices. When the budget covers
every distinct pair of every term the exact all-pairs plug-in is used.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import KDTree
from scipy.spatial.distance import cdist, pdist

from database.models import DivergenceEstimate, Estimator
from utils.errors import EstimatorError

BLOCK_ROWS = 1024
PAIR_CHUNK = 100_000
JITTER_SCALE = 1e-9


@dataclass(frozen=True)
class SampleSet:
    """Finite sample matrix of shape (n, d)"""
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2 or data.shape[0] == 0:
            raise EstimatorError("Sample set is empty")
        if not np.all(np.isfinite(data)):
            raise EstimatorError("Sample set contains NaN or Inf")
        object.__setattr__(self, 'data', data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


def as_sample_set(X) -> SampleSet:
    return X if isinstance(X, SampleSet) else SampleSet(X)


def _pair(X, Y, min_n=2):
    X, Y = as_sample_set(X), as_sample_set(Y)
    if X.d != Y.d:
        raise EstimatorError(f"Dimension mismatch: {X.d} vs {Y.d}")
    if X.n < min_n or Y.n < min_n:
        raise EstimatorError(f"Each sample set needs at least {min_n} points (got {X.n} and {Y.n})")
    return X, Y


def _canonical(X: SampleSet, Y: SampleSet):
    """Order a pair so swapped arguments produce the same summation order"""
    kx = (X.n, X.data.tobytes())
    ky = (Y.n, Y.data.tobytes())
    return (X, Y) if kx <= ky else (Y, X)


class DistanceKernel:
    """Euclidean distance |x - y|"""

    def matrix(self, A, B):
        return cdist(A, B, 'euclidean')

    def rows(self, a, b):
        return np.sqrt(np.sum((a - b) ** 2, axis=1))


class RbfKernel:
    """exp(-|x - y|^2 / 2 sigma^2)"""

    def __init__(self, bandwidth: float):
        self.scale = 2.0 * bandwidth ** 2

    def matrix(self, A, B):
        return np.exp(-cdist(A, B, 'sqeuclidean') / self.scale)

    def rows(self, a, b):
        return np.exp(-np.sum((a - b) ** 2, axis=1) / self.scale)


def _exact_mean(A, B, kernel, within: bool) -> float:
    """Mean kernel value over all pairs, excluding i == j when within a set"""
    total = 0.0
    for start in range(0, A.shape[0], BLOCK_ROWS):
        block = kernel.matrix(A[start:start + BLOCK_ROWS], B)
        if within:
            rows = np.arange(block.shape[0])
            block[rows, rows + start] = 0.0
        total += float(block.sum())
    count = A.shape[0] * (A.shape[0] - 1) if within else A.shape[0] * B.shape[0]
    return total / count


def _sampled_mean(A, B, kernel, budget, rng, within: bool) -> float:
    """Mean kernel value over ``budget`` uniformly drawn index pairs"""
    i = rng.integers(0, A.shape[0], size=budget)
    if within:
        j = rng.integers(0, A.shape[0] - 1, size=budget)
        j += j >= i
    else:
        j = rng.integers(0, B.shape[0], size=budget)
    total = 0.0
    for start in range(0, budget, PAIR_CHUNK):
        a = A[i[start:start + PAIR_CHUNK]]
        b = B[j[start:start + PAIR_CHUNK]]
        total += float(np.sum(kernel.rows(a, b)))
    return total / budget


def covers_all_pairs(n_x: int, n_y: int, pair_budget: int) -> bool:
    """True when the budget reaches every distinct pair of every term"""
    largest = max(n_x * n_y, n_x * (n_x - 1) // 2, n_y * (n_y - 1) // 2)
    return pair_budget >= largest


def _three_terms(X, Y, kernel, pair_budget, seed):
    if pair_budget < 1:
        raise EstimatorError("pair_budget must be at least 1")
    exact = covers_all_pairs(X.n, Y.n, pair_budget)
    if exact:
        A, B = _canonical(X, Y)
        cross = _exact_mean(A.data, B.data, kernel, within=False)
        within_x = _exact_mean(X.data, X.data, kernel, within=True)
        within_y = _exact_mean(Y.data, Y.data, kernel, within=True)
    else:
        rng_xy, rng_xx, rng_yy = [np.random.default_rng(s)
                                  for s in np.random.SeedSequence(seed).spawn(3)]
        cross = _sampled_mean(X.data, Y.data, kernel, pair_budget, rng_xy, within=False)
        within_x = _sampled_mean(X.data, X.data, kernel, pair_budget, rng_xx, within=True)
        within_y = _sampled_mean(Y.data, Y.data, kernel, pair_budget, rng_yy, within=True)
    return cross, within_x, within_y, exact


def energy_distance(X, Y, pair_budget: int, seed: int = 0) -> DivergenceEstimate:
    """2E|X-Y| - E|X-X'| - E|Y-Y'|"""
    X, Y = _pair(X, Y)
    cross, within_x, within_y, exact = _three_terms(X, Y, DistanceKernel(), pair_budget, seed)
    value = 2.0 * cross - (within_x + within_y)
    return DivergenceEstimate(value=value, estimator=Estimator.ED, pair_budget=pair_budget,
                              seed=seed, exact=exact)


def median_heuristic_bandwidth(X, subsample: int = 5000, seed: int = 0) -> float:
    """Median pairwise distance over a subsample drawn without replacement"""
    X = as_sample_set(X)
    if X.n < 2:
        raise EstimatorError("Median heuristic needs at least two points")
    if subsample < 2:
        raise EstimatorError("Median heuristic subsample must be at least 2")
    m = min(subsample, X.n)
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(X.n, size=m, replace=False))
    median = float(np.median(pdist(X.data[idx])))
    if not median > 0:
        raise EstimatorError("Median pairwise distance is zero; bandwidth must be positive")
    return median


def mmd_rbf(X, Y, bandwidth: float, pair_budget: int, seed: int = 0) -> DivergenceEstimate:
    """E k(X,X') + E k(Y,Y') - 2 E k(X,Y) with k = exp(-|x-y|^2 / 2 sigma^2)"""
    if not bandwidth > 0:
        raise EstimatorError(f"Bandwidth must be positive, got {bandwidth}")
    X, Y = _pair(X, Y)
    kernel = RbfKernel(bandwidth)
    cross, within_x, within_y, exact = _three_terms(X, Y, kernel, pair_budget, seed)
    value = (within_x + within_y) - 2.0 * cross
    return DivergenceEstimate(value=value, estimator=Estimator.MMD2, pair_budget=pair_budget,
                              seed=seed, bandwidth=float(bandwidth), exact=exact)


def jitter(X, seed: int, magnitude: float = JITTER_SCALE) -> np.ndarray:
    """Uniform jitter of ``magnitude`` times the data scale"""
    data = as_sample_set(X).data
    scale = max(float(np.max(np.abs(data))), 1.0)
    rng = np.random.default_rng(seed)
    return data + rng.uniform(-1.0, 1.0, size=data.shape) * magnitude * scale


def knn_kl(X, Y, k: int = 5, jitter_seed: Optional[int] = None) -> DivergenceEstimate:
    """kNN estimate of KL(F_X || F_Y).

    rho is the k-th neighbour distance inside X (self excluded) and nu the
    k-th neighbour distance into Y. Zero distances raise unless the caller
    opts into jitter through ``jitter_seed``.
    """
    X, Y = _pair(X, Y, min_n=1)
    if k < 1:
        raise EstimatorError("k must be at least 1")
    if X.n <= k or Y.n < k:
        raise EstimatorError(f"knn_kl needs n > k and m >= k (n={X.n}, m={Y.n}, k={k})")
    x, y = X.data, Y.data
    if jitter_seed is not None:
        x = jitter(x, jitter_seed)
        y = jitter(y, jitter_seed + 1)

    rho, _ = KDTree(x).query(x, k=[k + 1])
    nu, _ = KDTree(y).query(x, k=[k])
    rho, nu = rho[:, 0], nu[:, 0]
    if np.any(rho == 0) or np.any(nu == 0):
        raise EstimatorError("knn_kl found zero neighbour distances (duplicate points)")

    n, m, d = X.n, Y.n, X.d
    value = d / n * float(np.sum(np.log(nu / rho))) + np.log(m / (n - 1))
    return DivergenceEstimate(value=float(value), estimator=Estimator.KL, k=k, exact=True)
