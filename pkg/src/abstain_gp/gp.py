"""Gaussian-process model of a base classifier's logit error rate.

The latent function g has a zero-mean GP prior and each error bit is
Bernoulli(sigmoid(g(x))). The posterior over g at the training inputs is
approximated by a Gaussian centred on its mode (Laplace). The mode is found
by Newton's method written in terms of ``B = I + W^1/2 K W^1/2`` so that K is
never inverted; see Rasmussen & Williams, *Gaussian Processes for Machine
Learning*, algorithms 3.1 and 3.2.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.special import expit

from . import kernel as kern
from .errors import ConfigError, DataError, NotConvergedError, NumericalError

log = logging.getLogger(__name__)

FORMAT_NAME = "abstain_gp.GPFit"
FORMAT_VERSION = 1
DEFAULT_MAX_POINTS = 2000
_NEG_VAR_TOL = 1e-8


@dataclass(frozen=True)
class PosteriorSummary:
    logit_mean: float
    logit_var: float

    @property
    def error_rate(self) -> float:
        return float(expit(self.logit_mean))


@dataclass(frozen=True, eq=False)
class GPFit:
    X: np.ndarray
    errors: np.ndarray
    spec: kern.KernelSpec
    mode: np.ndarray
    grad_at_mode: np.ndarray
    sqrt_W: np.ndarray
    chol_B: np.ndarray
    converged: bool
    iterations: int
    tol: float = 1e-6
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("X", "errors", "mode", "grad_at_mode", "sqrt_W", "chol_B"):
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_train(self) -> int:
        return self.X.shape[0]


def log_likelihood(f, errors) -> float:
    """Bernoulli-logistic log-likelihood of 0/1 error bits given latents ``f``."""
    y = 2.0 * np.asarray(errors, dtype=float) - 1.0
    return float(-np.sum(np.logaddexp(0.0, -y * np.asarray(f, dtype=float))))


def log_posterior(f, K, errors) -> float:
    """Unnormalised log posterior ``log p(eps|f) - f' K^-1 f / 2``."""
    f = np.asarray(f, dtype=float)
    L = cholesky(K, lower=True)
    return log_likelihood(f, errors) - 0.5 * f @ cho_solve((L, True), f)


def log_posterior_grad(f, K, errors) -> np.ndarray:
    """Gradient of :func:`log_posterior` with respect to ``f``."""
    f = np.asarray(f, dtype=float)
    L = cholesky(K, lower=True)
    return (np.asarray(errors, float) - expit(f)) - cho_solve((L, True), f)


def _factor_B(K, sW):
    B = sW[:, None] * K * sW[None, :]
    B[np.diag_indices_from(B)] += 1.0
    return cholesky(B, lower=True)


def _newton(K, eps, tol, max_iter):
    m = eps.shape[0]
    f = np.zeros(m)
    a = np.zeros(m)
    psi = log_likelihood(f, eps)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        pi = expit(f)
        W = pi * (1.0 - pi)
        sW = np.sqrt(W)
        L = _factor_B(K, sW)
        b = W * f + (eps - pi)
        a_full = b - sW * cho_solve((L, True), sW * (K @ b))
        # Newton on a log-concave objective rarely overshoots; halve the step
        # in a-space when it does.
        da = a_full - a
        step = 1.0
        while True:
            a_new = a + step * da
            f_new = K @ a_new
            psi_new = log_likelihood(f_new, eps) - 0.5 * a_new @ f_new
            if psi_new >= psi - 1e-12 * abs(psi) or step < 1e-10:
                break
            step *= 0.5
        delta = float(np.max(np.abs(f_new - f)))
        f, a, psi = f_new, a_new, psi_new
        if delta < tol:
            converged = True
            break
    return f, converged, it


def fit_laplace(obs, spec: kern.KernelSpec, tol: float = 1e-6,
                max_iter: int = 50, max_points: int = DEFAULT_MAX_POINTS) -> GPFit:
    """Fit the error model to ``obs`` (an :class:`ErrorObservations`).

    Parameters
    ----------
    obs : ErrorObservations
        Inputs and the 0/1 error bits of the base model on them.
    spec : KernelSpec
        Prior covariance. If factorisation fails the jitter is doubled, up to
        eight times; the jitter actually used is stored on the result.
    tol : float
        Convergence threshold on the max-norm of the Newton update of the
        latent vector.
    max_iter : int
        Newton iteration budget. Exhausting it yields ``converged=False``
        (and a logged warning) rather than an exception.
    max_points : int
        Hard cap on the number of observations; the dense O(m^3) solve does
        not scale beyond a few thousand.

    Returns
    -------
    GPFit
    """
    X = np.asarray(obs.inputs, dtype=float)
    eps = np.asarray(obs.errors, dtype=float)
    m = eps.shape[0]
    if m < 1:
        raise DataError("fit_laplace needs at least one observation")
    if m > max_points:
        raise ConfigError(
            f"{m} error observations exceed the limit of {max_points}; "
            "subsample them first")
    if tol <= 0 or max_iter < 1:
        raise ConfigError("tol must be > 0 and max_iter >= 1")

    current = spec
    for _ in range(kern.MAX_JITTER_DOUBLINGS + 1):
        K = kern.gram(current, X)
        try:
            f, converged, iterations = _newton(K, eps, tol, max_iter)
            pi = expit(f)
            sW = np.sqrt(pi * (1.0 - pi))
            L = _factor_B(K, sW)
            break
        except LinAlgError:
            j = current.jitter
            current = current.with_jitter(
                2 * j if j > 0 else kern.DEFAULT_JITTER * spec.variance)
            log.warning("factorisation failed; retrying with jitter %g",
                        current.jitter)
    else:
        raise NumericalError(
            f"Cholesky failed after {kern.MAX_JITTER_DOUBLINGS} jitter doublings")

    if not converged:
        log.warning("Laplace mode search did not converge in %d iterations",
                    max_iter)
    return GPFit(X=X, errors=eps.astype(np.int8), spec=current, mode=f,
                 grad_at_mode=eps - pi, sqrt_W=sW, chol_B=L,
                 converged=converged, iterations=iterations, tol=tol)


def _require_converged(fit: GPFit):
    if not fit.converged:
        raise NotConvergedError(
            f"GP fit did not converge after {fit.iterations} iterations")


def predict_many(fit: GPFit, Xstar, chunk: int = 2048):
    """Posterior logit mean and variance at each row of ``Xstar``.

    Returns two float vectors. Work is chunked over query rows so memory
    stays at ``O(chunk * m)``.
    """
    _require_converged(fit)
    Xstar = np.asarray(Xstar, dtype=float)
    if Xstar.ndim == 1:
        Xstar = Xstar.reshape(1, -1)
    if Xstar.shape[1] != fit.X.shape[1]:
        raise ValueError(f"query dimension {Xstar.shape[1]} != training "
                         f"dimension {fit.X.shape[1]}")
    q = Xstar.shape[0]
    mean = np.empty(q)
    var = np.empty(q)
    kss = fit.spec.prior_variance
    for lo in range(0, q, chunk):
        Ks = kern.cross(fit.spec, Xstar[lo:lo + chunk], fit.X)
        mean[lo:lo + chunk] = Ks @ fit.grad_at_mode
        v = solve_triangular(fit.chol_B, (fit.sqrt_W[:, None] * Ks.T),
                             lower=True, check_finite=False)
        var[lo:lo + chunk] = kss - np.einsum("ij,ij->j", v, v)
    worst = float(var.min()) if q else 0.0
    if worst < 0:
        if worst < -_NEG_VAR_TOL:
            warnings.warn(f"clamping negative predictive variance {worst:g}",
                          RuntimeWarning, stacklevel=2)
        np.maximum(var, 0.0, out=var)
    return mean, var


def predict(fit: GPFit, x) -> PosteriorSummary:
    mean, var = predict_many(fit, np.asarray(x, dtype=float).reshape(1, -1))
    return PosteriorSummary(float(mean[0]), float(var[0]))


def log_marginal_likelihood(fit: GPFit) -> float:
    """Laplace approximation to ``log p(eps | X, kernel)``."""
    _require_converged(fit)
    return (log_likelihood(fit.mode, fit.errors)
            - 0.5 * float(fit.grad_at_mode @ fit.mode)
            - float(np.sum(np.log(np.diag(fit.chol_B)))))


def save_fit(fit: GPFit, path) -> None:
    """Write ``fit`` as an ``.npz`` archive with a JSON header."""
    meta = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "kernel": fit.spec.to_dict(),
        "converged": bool(fit.converged),
        "iterations": int(fit.iterations),
        "tol": fit.tol,
        "info": fit.info,
    }
    with Path(path).open("wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)),
                 X=fit.X, errors=fit.errors, mode=fit.mode,
                 grad_at_mode=fit.grad_at_mode, sqrt_W=fit.sqrt_W,
                 chol_B=fit.chol_B)


def load_fit(path) -> GPFit:
    with np.load(Path(path), allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("format") != FORMAT_NAME:
            raise DataError(f"{path} is not a saved GP fit")
        if meta.get("version") != FORMAT_VERSION:
            raise DataError(f"unsupported GP fit version {meta.get('version')}")
        return GPFit(X=z["X"], errors=z["errors"],
                     spec=kern.KernelSpec(**meta["kernel"]), mode=z["mode"],
                     grad_at_mode=z["grad_at_mode"], sqrt_W=z["sqrt_W"],
                     chol_B=z["chol_B"], converged=meta["converged"],
                     iterations=meta["iterations"], tol=meta["tol"],
                     info=meta.get("info", {}))
