"""Squared-exponential covariance with diagonal jitter."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import LinAlgError, cholesky

from .errors import ConfigError, NumericalError

#: relative jitter used when none is given: jitter = DEFAULT_JITTER * variance
DEFAULT_JITTER = 1e-6
MAX_JITTER_DOUBLINGS = 8


@dataclass(frozen=True)
class KernelSpec:
    """Isotropic squared-exponential kernel.

    ``variance`` is k(x, x) before jitter, i.e. the squared amplitude.
    ``jitter=None`` resolves to ``1e-6 * variance``.
    """

    variance: float
    length_scale: float
    jitter: float | None = None

    def __post_init__(self):
        if not (self.variance > 0 and np.isfinite(self.variance)):
            raise ConfigError(f"kernel variance must be > 0, got {self.variance}")
        if not (self.length_scale > 0 and np.isfinite(self.length_scale)):
            raise ConfigError(
                f"kernel length_scale must be > 0, got {self.length_scale}")
        if self.jitter is None:
            object.__setattr__(self, "jitter", DEFAULT_JITTER * self.variance)
        elif not self.jitter >= 0:
            raise ConfigError(f"kernel jitter must be >= 0, got {self.jitter}")
        object.__setattr__(self, "variance", float(self.variance))
        object.__setattr__(self, "length_scale", float(self.length_scale))
        object.__setattr__(self, "jitter", float(self.jitter))

    @property
    def prior_variance(self) -> float:
        """k(x, x) including the diagonal stabilizer."""
        return self.variance + self.jitter

    def with_jitter(self, jitter: float) -> KernelSpec:
        return replace(self, jitter=jitter)

    def to_dict(self):
        return {"variance": self.variance, "length_scale": self.length_scale,
                "jitter": self.jitter}


def k(spec: KernelSpec, x, x2) -> float:
    """Kernel value between two single points (no jitter)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    x2 = np.asarray(x2, dtype=float).reshape(-1)
    if x.shape != x2.shape:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {x2.shape[0]}")
    d2 = float(np.sum((x - x2) ** 2))
    return spec.variance * float(np.exp(-0.5 * d2 / spec.length_scale ** 2))


def _sq_dist(A, B):
    # Accumulate per coordinate so every entry is summed in the same order;
    # (a-b)**2 == (b-a)**2 exactly, which makes gram() bit-symmetric.
    out = np.zeros((A.shape[0], B.shape[0]))
    for j in range(A.shape[1]):
        diff = A[:, j][:, None] - B[:, j][None, :]
        out += diff * diff
    return out


def cross(spec: KernelSpec, A, B) -> np.ndarray:
    """Kernel matrix between the rows of ``A`` and ``B`` (no jitter)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return spec.variance * np.exp(-0.5 * _sq_dist(A, B) / spec.length_scale ** 2)


def gram(spec: KernelSpec, X) -> np.ndarray:
    """Gram matrix of the rows of ``X`` with ``spec.jitter`` on the diagonal."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] < 1:
        raise ValueError("gram needs at least one row")
    G = cross(spec, X, X)
    G[np.diag_indices_from(G)] += spec.jitter
    return G


def cholesky_with_jitter(spec: KernelSpec, X):
    """Lower Cholesky factor of ``gram(spec, X)``, escalating jitter on failure.

    The jitter is doubled up to eight times (starting from ``1e-6 * variance``
    if the spec has none). Returns ``(L, spec_used)``.
    """
    current = spec
    for _ in range(MAX_JITTER_DOUBLINGS + 1):
        try:
            return cholesky(gram(current, X), lower=True), current
        except LinAlgError:
            if current.jitter > 0:
                current = current.with_jitter(2 * current.jitter)
            else:
                current = current.with_jitter(DEFAULT_JITTER * spec.variance)
    raise NumericalError(
        f"Cholesky failed after {MAX_JITTER_DOUBLINGS} jitter doublings "
        f"(last jitter {current.jitter:g})")
