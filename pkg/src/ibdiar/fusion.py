"""PCA whitening of latent features and two-stream posterior fusion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ParameterError


@dataclass(frozen=True)
class PcaTransform:
    mean: np.ndarray
    components: np.ndarray   # (d_kept, D), orthonormal rows
    scales: np.ndarray       # 1 / sqrt(eigenvalue) per kept component
    eigenvalues: np.ndarray

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def transform(self, x) -> np.ndarray:
        return ((np.asarray(x, dtype=np.float64) - self.mean) @ self.components.T) * self.scales


def fit_pca_whiten(latent, eig_floor: float = 1e-8) -> PcaTransform:
    """Fit a whitening transform (zero mean, identity covariance).

    Covariance uses the 1/T normalisation.  Components whose eigenvalue is
    below ``eig_floor`` are discarded.
    """
    x = np.asarray(latent, dtype=np.float64)
    if x.ndim != 2:
        raise ParameterError("latent features must be a T x D matrix")
    t, d = x.shape
    if t <= d:
        raise ParameterError("insufficient frames for PCA")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / t
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    keep = evals >= eig_floor
    if not keep.any():
        raise ParameterError("latent features have no variance")
    return PcaTransform(mean, evecs[:, keep].T.copy(), 1.0 / np.sqrt(evals[keep]), evals[keep])


@dataclass(frozen=True)
class StreamWeights:
    """Fusion weights; ``w_spectral + w_latent`` must equal 1."""

    w_spectral: float
    w_latent: float

    def __post_init__(self):
        if not (0.0 <= self.w_spectral <= 1.0 and 0.0 <= self.w_latent <= 1.0):
            raise ParameterError("stream weights must lie in [0, 1]")
        if self.w_spectral + self.w_latent != 1.0:
            raise ParameterError("stream weights must sum to 1")

    @classmethod
    def latent(cls, w_latent: float) -> "StreamWeights":
        return cls(1.0 - w_latent, w_latent)

    def __str__(self):
        return f"({self.w_spectral:g}, {self.w_latent:g})"


def fuse_posteriors(p_spec, p_lat, w: StreamWeights) -> np.ndarray:
    """P(y | f_s, f_z) = P(y | f_s) w_s + P(y | f_z) w_z, row by row."""
    a = np.asarray(p_spec, dtype=np.float64)
    b = np.asarray(p_lat, dtype=np.float64)
    if a.shape != b.shape:
        raise ParameterError(f"stream posteriors differ in shape: {a.shape} vs {b.shape}")
    if not isinstance(w, StreamWeights):
        raise ParameterError("weights must be a StreamWeights instance")
    if w.w_latent == 0.0:
        return a.copy()
    if w.w_spectral == 0.0:
        return b.copy()
    return a * w.w_spectral + b * w.w_latent


def sweep_weights(step: float = 0.1) -> list[StreamWeights]:
    """Grid (1 - k*step, k*step) from latent weight 0 to 1 inclusive."""
    if not 0.0 < step <= 1.0:
        raise ParameterError("step must lie in (0, 1]")
    n = int(round(1.0 / step))
    if abs(n * step - 1.0) > 1e-9:
        raise ParameterError("step must divide 1 evenly")
    return [StreamWeights.latent(k / n) for k in range(n + 1)]
