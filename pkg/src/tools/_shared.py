"""Shared helpers for the analysis tools - avoids circular imports"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit


@dataclass(frozen=True)
class Estimate:
    """A metric value that may be undefined; undefined values carry a reason"""

    value: float | None
    reason: str | None = None
    p_value: float | None = None

    @property
    def defined(self) -> bool:
        return self.value is not None

    @classmethod
    def undefined(cls, reason: str) -> "Estimate":
        return cls(None, reason)


def sigmoid(x):
    return expit(x)


def summarize(values) -> dict:
    """mean / std (ddof=0) / count over the defined values of an Estimate list"""
    defined = [e.value for e in values if e.defined]
    excluded = len(values) - len(defined)
    if not defined:
        return {"mean": None, "std": None, "n": 0, "n_excluded": excluded}
    arr = np.asarray(defined, dtype=np.float64)
    return {
        "mean": float(arr.mean()),
        "std": float(arr.std()),
        "n": len(defined),
        "n_excluded": excluded,
    }
