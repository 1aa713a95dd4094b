"""Logistic-regression error model, the monotone baseline.

It yields a point estimate of the error rate and nothing else. In particular
it has no notion of how well a region was observed.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import DataError, NotConvergedError

log = logging.getLogger(__name__)

RIDGE = 1e-8


@dataclass(frozen=True, eq=False)
class LogisticFit:
    beta: np.ndarray  # intercept first
    converged: bool
    iterations: int = 0

    @property
    def dim(self) -> int:
        return self.beta.shape[0] - 1


def _design(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    return np.hstack([np.ones((X.shape[0], 1)), X])


def penalized_loglik(beta, X, errors, ridge=RIDGE) -> float:
    eta = _design(X) @ beta
    y = 2.0 * np.asarray(errors, float) - 1.0
    return float(-np.sum(np.logaddexp(0.0, -y * eta)) - 0.5 * ridge * beta @ beta)


def penalized_grad(beta, X, errors, ridge=RIDGE) -> np.ndarray:
    Z = _design(X)
    return Z.T @ (np.asarray(errors, float) - expit(Z @ beta)) - ridge * beta


def fit_logistic(obs, max_iter: int = 200, tol: float = 1e-10,
                 ridge: float = RIDGE) -> LogisticFit:
    """Maximum-likelihood logistic fit by iteratively reweighted least squares.

    A ridge term of ``1e-8`` keeps coefficients finite when the error bits
    are separable (or constant). Convergence means the penalised
    log-likelihood improved by less than ``tol`` in one step.
    """
    Z = _design(obs.inputs)
    eps = np.asarray(obs.errors, dtype=float)
    if eps.shape[0] < 1:
        raise DataError("fit_logistic needs at least one observation")
    p = Z.shape[1]
    beta = np.zeros(p)
    ll = penalized_loglik(beta, obs.inputs, eps, ridge)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = expit(Z @ beta)
        w = mu * (1.0 - mu)
        H = (Z * w[:, None]).T @ Z + ridge * np.eye(p)
        g = Z.T @ (eps - mu) - ridge * beta
        delta = np.linalg.solve(H, g)
        step = 1.0
        while True:
            cand = beta + step * delta
            ll_new = penalized_loglik(cand, obs.inputs, eps, ridge)
            if ll_new >= ll or step < 1e-10:
                break
            step *= 0.5
        improvement = ll_new - ll
        beta, ll = cand, ll_new
        if improvement < tol:
            converged = True
            break
    if not converged:
        log.warning("IRLS did not converge in %d iterations", max_iter)
    return LogisticFit(beta=beta, converged=converged, iterations=it)


def logit_many(fit: LogisticFit, X) -> np.ndarray:
    if not fit.converged:
        raise NotConvergedError("logistic fit did not converge")
    Z = _design(X)
    if Z.shape[1] != fit.beta.shape[0]:
        raise ValueError(f"input dimension {Z.shape[1] - 1} != fitted "
                         f"dimension {fit.dim}")
    return Z @ fit.beta


def predict_error_rate(fit: LogisticFit, x) -> float:
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return float(expit(logit_many(fit, x)[0]))


def save_logistic(fit: LogisticFit, path) -> None:
    payload = {"format": "abstain_gp.LogisticFit", "version": 1,
               "beta": [float(b) for b in fit.beta],
               "converged": bool(fit.converged), "iterations": fit.iterations}
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_logistic(path) -> LogisticFit:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != "abstain_gp.LogisticFit":
        raise DataError(f"{path} is not a saved logistic fit")
    return LogisticFit(np.asarray(payload["beta"], float), payload["converged"],
                       payload.get("iterations", 0))
