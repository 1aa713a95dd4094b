"""Disjunctive rule sets: evaluation, a text format, and a covering learner.

Rule text grammar (keywords are case-insensitive, ``#`` starts a comment)::

    IF <conj> [OR <conj>]* THEN <label> ELSE <label>
    <conj> := <cond> [AND <cond>]*      optionally wrapped in ( )
    <cond> := <feature> (<=|>=) <number> optionally wrapped in [ ]

``IF FALSE THEN a ELSE b`` denotes the empty rule set.
"""

from __future__ import annotations

import math
import re
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import LabeledDataset
from .errors import DataError, RuleSyntaxError


@dataclass(frozen=True)
class Condition:
    feature: str
    op: str
    threshold: float

    def __post_init__(self):
        if self.op not in ("<=", ">="):
            raise ValueError(f"rule conditions use <= or >=, got {self.op!r}")
        object.__setattr__(self, "threshold", float(self.threshold))

    def holds(self, value) -> bool:
        return value <= self.threshold if self.op == "<=" else value >= self.threshold

    def __str__(self):
        return f"{self.feature} {self.op} {self.threshold!r}"


@dataclass(frozen=True)
class RuleModel:
    rules: tuple[tuple[Condition, ...], ...]
    default_label: int = 0
    positive_label: int = 1

    def __post_init__(self):
        rules = tuple(tuple(conj) for conj in self.rules)
        if any(len(conj) == 0 for conj in rules):
            raise ValueError("rule conjunctions must be non-empty")
        if self.default_label not in (0, 1) or self.positive_label not in (0, 1):
            raise ValueError("rule labels must be 0 or 1")
        object.__setattr__(self, "rules", rules)

    def features(self) -> set[str]:
        return {c.feature for conj in self.rules for c in conj}

    def __str__(self):
        return serialize_rules(self)


def eval_rules(model: RuleModel, x, feature_names=None) -> int:
    """Label for one input.

    ``x`` is either a mapping from feature name to value, or a vector laid
    out as ``feature_names``.
    """
    if isinstance(x, Mapping):
        lookup = x
    else:
        if feature_names is None:
            raise DataError("a vector input needs feature_names")
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != len(feature_names):
            raise DataError(
                f"input has {x.shape[0]} values, schema has {len(feature_names)}")
        lookup = dict(zip(feature_names, x))
    missing = model.features() - set(lookup)
    if missing:
        raise DataError(f"input lacks rule features {sorted(missing)}")
    for conj in model.rules:
        if all(c.holds(lookup[c.feature]) for c in conj):
            return model.positive_label
    return model.default_label


class RuleClassifier:
    """A :class:`RuleModel` bound to a feature layout, usable as a base model."""

    def __init__(self, model: RuleModel, feature_names):
        self.model = model
        self.feature_names = tuple(feature_names)
        missing = model.features() - set(self.feature_names)
        if missing:
            raise DataError(
                f"rules reference unknown features {sorted(missing)}")
        self._index = {n: i for i, n in enumerate(self.feature_names)}

    def predict(self, x) -> int:
        return eval_rules(self.model, x, self.feature_names)

    def predict_many(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise DataError(
                f"expected rows of {len(self.feature_names)} features, got {X.shape}")
        fired = np.zeros(X.shape[0], dtype=bool)
        for conj in self.model.rules:
            hit = np.ones(X.shape[0], dtype=bool)
            for c in conj:
                col = X[:, self._index[c.feature]]
                hit &= col <= c.threshold if c.op == "<=" else col >= c.threshold
            fired |= hit
        return np.where(fired, self.model.positive_label,
                        self.model.default_label).astype(np.int8)


# --- text format -----------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+|\#[^\n]*)
  | (?P<nl>\n)
  | (?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)
  | (?P<op><=|>=)
  | (?P<ident>[A-Za-z_][\w.]*)
  | (?P<punct>[\[\]()])
""", re.VERBOSE)

_KEYWORDS = {"IF", "THEN", "ELSE", "AND", "OR", "FALSE"}


def _tokenize(text):
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise RuleSyntaxError(f"unexpected character {text[pos]!r}",
                                  line, pos - line_start + 1)
        kind, value = m.lastgroup, m.group()
        col = pos - line_start + 1
        if kind == "nl":
            line, line_start = line + 1, m.end()
        elif kind != "ws":
            if kind == "ident" and value.upper() in _KEYWORDS:
                kind, value = "kw", value.upper()
            tokens.append((kind, value, line, col))
        pos = m.end()
    tokens.append(("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def fail(self, expected):
        kind, value, line, col = self.peek()
        got = "end of input" if kind == "eof" else repr(value)
        raise RuleSyntaxError(f"expected {expected}, got {got}", line, col)

    def accept(self, kind, value=None):
        tok = self.peek()
        if tok[0] == kind and (value is None or tok[1] == value):
            self.i += 1
            return tok
        return None

    def expect(self, kind, value=None, what=None):
        tok = self.accept(kind, value)
        if tok is None:
            self.fail(what or value or kind)
        return tok

    def label(self):
        tok = self.expect("num", what="label 0 or 1")
        try:
            val = float(tok[1])
        except ValueError:
            val = math.nan
        if val not in (0.0, 1.0):
            raise RuleSyntaxError(f"label must be 0 or 1, got {tok[1]!r}",
                                  tok[2], tok[3])
        return int(val)

    def cond(self):
        bracket = self.accept("punct", "[")
        feat = self.expect("ident", what="feature name")[1]
        op = self.expect("op", what="<= or >=")[1]
        num = float(self.expect("num", what="number")[1])
        if bracket:
            self.expect("punct", "]")
        return Condition(feat, op, num)

    def conj(self):
        paren = self.accept("punct", "(")
        conds = [self.cond()]
        while self.accept("kw", "AND"):
            conds.append(self.cond())
        if paren:
            self.expect("punct", ")")
        return tuple(conds)

    def parse(self):
        self.expect("kw", "IF")
        if self.accept("kw", "FALSE"):
            rules = []
        else:
            rules = [self.conj()]
            while self.accept("kw", "OR"):
                rules.append(self.conj())
        self.expect("kw", "THEN")
        positive = self.label()
        self.expect("kw", "ELSE")
        default = self.label()
        if self.peek()[0] != "eof":
            self.fail("end of input")
        return RuleModel(tuple(rules), default_label=default,
                         positive_label=positive)


def parse_rules(text: str) -> RuleModel:
    return _Parser(text).parse()


def serialize_rules(model: RuleModel) -> str:
    if not model.rules:
        head = "IF FALSE"
    else:
        conjs = [" AND ".join(str(c) for c in conj) for conj in model.rules]
        head = "IF " + "\nOR ".join(conjs)
    return f"{head}\nTHEN {model.positive_label}\nELSE {model.default_label}\n"


def load_rules(path) -> RuleModel:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such rules file: {path}")
    return parse_rules(path.read_text(encoding="utf-8"))


def save_rules(model: RuleModel, path) -> None:
    Path(path).write_text(serialize_rules(model), encoding="utf-8")


# --- learner ---------------------------------------------------------------

@dataclass(frozen=True)
class LearnerConfig:
    min_precision: float = 0.9
    max_conditions: int = 3
    max_rules: int = 50


def _foil_gain(p1, n1, p0, n0):
    with np.errstate(divide="ignore", invalid="ignore"):
        g = p1 * (np.log2(p1 / (p1 + n1)) - math.log2(p0 / (p0 + n0)))
    return np.where(p1 > 0, g, 0.0)


def _best_condition(X, pos, names):
    """Single threshold condition with the highest FOIL gain, or None."""
    P = int(pos.sum())
    N = int(pos.shape[0] - P)
    best = None  # (gain, name, op, threshold)
    for j, name in enumerate(names):
        vals, inv = np.unique(X[:, j], return_inverse=True)
        if vals.shape[0] < 2:
            continue
        w = pos.astype(float)
        cp = np.cumsum(np.bincount(inv, weights=w, minlength=vals.shape[0]))
        cn = np.cumsum(np.bincount(inv, weights=1.0 - w, minlength=vals.shape[0]))
        thr = (vals[:-1] + vals[1:]) / 2.0
        for op, p1, n1 in (("<=", cp[:-1], cn[:-1]),
                           (">=", P - cp[:-1], N - cn[:-1])):
            gains = _foil_gain(p1, n1, P, N)
            k = int(np.argmax(gains))  # first max -> smallest threshold
            cand = (float(gains[k]), name, op, float(thr[k]))
            if cand[0] <= 0:
                continue
            if (best is None or cand[0] > best[0]
                    or (cand[0] == best[0] and (name, op) < (best[1], best[2]))):
                best = cand
    if best is None:
        return None
    return Condition(best[1], best[2], best[3])


def _covered(X, conds, index):
    hit = np.ones(X.shape[0], dtype=bool)
    for c in conds:
        col = X[:, index[c.feature]]
        hit &= col <= c.threshold if c.op == "<=" else col >= c.threshold
    return hit


def learn_rules(train: LabeledDataset, config: LearnerConfig = LearnerConfig()) -> RuleModel:
    """Greedy sequential covering for class 1.

    Each rule is grown one threshold condition at a time, picking the
    condition with the largest FOIL gain over midpoints of the distinct
    values, until its precision on the remaining data reaches
    ``config.min_precision``, it has ``config.max_conditions`` conditions,
    or no condition gains. A rule that misses the precision bar ends
    learning. Positives covered by an accepted rule are removed before the
    next one is grown. The default label is the majority class among rows no
    rule covers (ties go to 0).

    Ties in gain go to the lexicographically smaller feature name, then
    ``<=`` before ``>=``, then the smaller threshold.
    """
    y = np.asarray(train.labels)
    if np.unique(y).shape[0] < 2:
        raise DataError("learn_rules needs both classes in the training data")
    X = train.features
    names = train.feature_names
    index = {n: i for i, n in enumerate(names)}
    remaining = np.ones(len(train), dtype=bool)
    rules = []
    while len(rules) < config.max_rules and np.any(remaining & (y == 1)):
        rows = np.flatnonzero(remaining)
        conds = []
        cov = rows
        while len(conds) < config.max_conditions:
            pos = y[cov] == 1
            if pos.mean() >= config.min_precision:
                break
            cond = _best_condition(X[cov], pos, names)
            if cond is None:
                break
            conds.append(cond)
            cov = rows[_covered(X[rows], conds, index)]
        if not conds:
            break
        pos = y[cov] == 1
        if pos.sum() == 0 or pos.mean() < config.min_precision:
            break
        rules.append(tuple(conds))
        remaining[cov[pos]] = False
    model = RuleModel(tuple(rules), default_label=0, positive_label=1)
    uncovered = RuleClassifier(model, names).predict_many(X) == 0
    ones = int(y[uncovered].sum())
    default = 1 if ones > uncovered.sum() - ones else 0
    return RuleModel(tuple(rules), default_label=default, positive_label=1)
