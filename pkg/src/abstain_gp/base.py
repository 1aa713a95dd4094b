"""The black-box classifier interface the error model wraps."""

from typing import Protocol, runtime_checkable

import numpy as np


@runtime_checkable
class BaseModel(Protocol):
    """Anything that maps one feature vector to a 0/1 label.

    Implementations must be deterministic. They may additionally provide
    ``predict_many(X)`` returning a vector of labels for a matrix of rows;
    :func:`predict_labels` uses it when present.
    """

    def predict(self, x) -> int: ...


def predict_labels(base, X) -> np.ndarray:
    """Predict every row of ``X`` with ``base``, returning an int8 vector."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D feature matrix, got shape {X.shape}")
    many = getattr(base, "predict_many", None)
    if many is not None:
        out = np.asarray(many(X))
    else:
        out = np.array([base.predict(row) for row in X])
    out = out.astype(np.int8, copy=False).reshape(-1)
    if out.shape[0] != X.shape[0] or np.any((out != 0) & (out != 1)):
        raise ValueError("base model must return one 0/1 label per row")
    return out


class ConstantModel:
    """Always predicts the same label. Handy as a reference classifier."""

    def __init__(self, label: int):
        if label not in (0, 1):
            raise ValueError("label must be 0 or 1")
        self.label = int(label)

    def predict(self, x) -> int:
        return self.label

    def predict_many(self, X) -> np.ndarray:
        return np.full(np.asarray(X).shape[0], self.label, dtype=np.int8)
