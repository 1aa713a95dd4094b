"""Accept, flip or abstain on a base prediction given the error posterior."""

from __future__ import annotations

import enum
import sys
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .gp import PosteriorSummary

#: var_threshold value that switches variance-based abstention off
VAR_DISABLED = sys.float_info.max


class Verdict(enum.IntEnum):
    ACCEPT = 0
    FLIP = 1
    ABSTAIN = 2

    def __str__(self):
        return self.name.lower()


@dataclass(frozen=True)
class ThresholdPolicy:
    """Abstain when ``|logit_mean| < mean_threshold`` or ``logit_var > var_threshold``.

    Both comparisons are strict, so a value sitting exactly on a threshold
    does not abstain. ``mean_threshold=0`` and ``var_threshold=VAR_DISABLED``
    switch the respective test off. With ``flip=False`` confident-wrong
    points keep the base label instead of being flipped.
    """

    mean_threshold: float = 1.0
    var_threshold: float = 3.0
    flip: bool = True

    def __post_init__(self):
        if not self.mean_threshold >= 0:
            raise ConfigError(f"mean_threshold must be >= 0, got {self.mean_threshold}")
        if not self.var_threshold > 0:
            raise ConfigError(f"var_threshold must be > 0, got {self.var_threshold}")


@dataclass(frozen=True)
class Decision:
    verdict: Verdict
    final_label: int | None
    base_pred: int
    summary: PosteriorSummary

    @property
    def accepted(self) -> bool:
        return self.verdict is not Verdict.ABSTAIN


def decide_arrays(base_pred, logit_mean, logit_var, policy: ThresholdPolicy):
    """Vectorised :func:`decide`.

    Returns ``(verdicts, final_labels)`` as int8 arrays; ``final_labels`` is
    -1 where the verdict is abstain.
    """
    base_pred = np.asarray(base_pred, dtype=np.int8)
    mean = np.asarray(logit_mean, dtype=float)
    var = np.asarray(logit_var, dtype=float)
    abstain = (np.abs(mean) < policy.mean_threshold) | (var > policy.var_threshold)
    # at mean_threshold 0 a posterior mean of exactly 0 carries no evidence
    # of error, so flipping needs a strictly positive mean
    flip = ~abstain & (mean > 0) & policy.flip
    verdict = np.where(abstain, Verdict.ABSTAIN,
                       np.where(flip, Verdict.FLIP, Verdict.ACCEPT)).astype(np.int8)
    final = np.where(abstain, -1, np.where(flip, 1 - base_pred, base_pred))
    return verdict, final.astype(np.int8)


def decide(base_pred: int, summary: PosteriorSummary,
           policy: ThresholdPolicy) -> Decision:
    v, f = decide_arrays([base_pred], [summary.logit_mean], [summary.logit_var],
                         policy)
    verdict = Verdict(int(v[0]))
    label = None if verdict is Verdict.ABSTAIN else int(f[0])
    return Decision(verdict, label, int(base_pred), summary)
