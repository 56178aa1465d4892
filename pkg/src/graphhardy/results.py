"""Records returned by the empirical verifiers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

__all__ = ["VerificationResult", "HypothesisError", "max_ratio"]


class HypothesisError(ValueError):
    """A verifier was called outside the parameter range of its statement.

    Attributes
    ----------
    hypothesis : str
        Short name of the violated requirement, e.g. ``"p_minus > 1"``.
    """

    def __init__(self, hypothesis: str, detail: str = ""):
        msg = f"hypothesis violated: {hypothesis}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.hypothesis = hypothesis


@dataclass
class VerificationResult:
    """Empirical constant fitted by a verifier.

    Attributes
    ----------
    name : str
        Identifier of the inequality being tested.
    fitted_C : float
        Largest observed ratio ``lhs / rhs``.
    trials : int
        Number of inputs evaluated (degenerate inputs excluded).
    worst_case : dict
        Trial index (and any parameters) attaining ``fitted_C``.
    ratios : list of float
        All observed ratios in trial order.
    extra : dict
        Verifier-specific diagnostics (secondary constants, hypotheses).
    """

    name: str
    fitted_C: float
    trials: int
    worst_case: dict = field(default_factory=dict)
    ratios: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "fitted_C": float(self.fitted_C),
            "trials": int(self.trials),
            "worst_case": _plain(self.worst_case),
            "extra": _plain(self.extra),
        }


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    return obj


def max_ratio(name: str, ratios, extra: dict | None = None, labels=None) -> VerificationResult:
    """Build a :class:`VerificationResult` from a list of ratios (NaNs skipped)."""
    r = np.asarray(ratios, dtype=float)
    ok = np.isfinite(r)
    if not ok.any():
        return VerificationResult(name, 0.0, 0, {}, list(map(float, r)), extra or {})
    i = int(np.flatnonzero(ok)[np.argmax(r[ok])])
    worst = {"trial": i}
    if labels is not None:
        worst["input"] = labels[i]
    return VerificationResult(name, float(r[i]), int(ok.sum()), worst, [float(v) for v in r],
                              extra or {})
