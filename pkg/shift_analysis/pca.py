from dataclasses import dataclass

import numpy as np

from shift_analysis.divergence import SampleSet, as_sample_set
from utils.errors import EstimatorError


@dataclass(frozen=True)
class PcaModel:
    """Principal axes fitted on a reference sample set"""
    mean: np.ndarray
    components: np.ndarray  # (d, q), orthonormal columns
    explained_variance_ratio: np.ndarray

    @property
    def q(self) -> int:
        return self.components.shape[1]


def pca_fit(X, q: int = 2) -> PcaModel:
    """Top-q eigenvectors of the sample covariance.

    Components are ordered by decreasing eigenvalue; each is signed so its
    largest-magnitude entry is positive.
    """
    X = as_sample_set(X)
    if q < 1 or X.n <= q:
        raise EstimatorError(f"pca_fit needs n > q >= 1 (n={X.n}, q={q})")
    if q > X.d:
        raise EstimatorError(f"Cannot keep {q} components of {X.d}-dimensional data")

    mean = X.data.mean(axis=0)
    cov = np.atleast_2d(np.cov(X.data, rowvar=False))
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals, eigvecs = eigvals[order], eigvecs[:, order]

    tol = max(X.n, X.d) * np.finfo(float).eps * max(eigvals[0], 0.0)
    rank = int(np.sum(eigvals > tol))
    if q > rank:
        raise EstimatorError(f"Covariance has rank {rank}; cannot keep {q} components")

    components = eigvecs[:, :q].copy()
    for j in range(q):
        pivot = np.argmax(np.abs(components[:, j]))
        if components[pivot, j] < 0:
            components[:, j] = -components[:, j]

    total = np.sum(np.clip(eigvals, 0.0, None))
    ratios = np.clip(eigvals[:q], 0.0, None) / total
    return PcaModel(mean=mean, components=components, explained_variance_ratio=np.clip(ratios, 0.0, 1.0))


def pca_project(model: PcaModel, X) -> SampleSet:
    X = as_sample_set(X)
    if X.d != model.mean.shape[0]:
        raise EstimatorError(f"Dimension mismatch: model has {model.mean.shape[0]}, data has {X.d}")
    return SampleSet((X.data - model.mean) @ model.components)
