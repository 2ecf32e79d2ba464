"""Classical substate decomposition of P against Q.

With a = S(P||Q) and r >= 1, the set ``good = {i : P(i) / 2^(r(a+1)) <= Q(i)}``
carries P-mass at least 1 - 1/r, and the renormalization of P onto it sits
under Q once scaled by alpha = ((r-1)/r) 2^(-r(a+1)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfiniteDivergence
from .probability import FiniteDist, relative_entropy, total_variation

SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class SubstateDecomposition:
    P: FiniteDist
    Q: FiniteDist
    a: float
    r: float
    good: frozenset
    p_tilde: FiniteDist
    alpha: float

    @property
    def threshold(self) -> float:
        """The factor 2^(r(a+1)) in the membership test."""
        return 2.0 ** (self.r * (self.a + 1.0))

    @property
    def bad(self) -> frozenset:
        return frozenset(self.P.alphabet) - self.good

    @property
    def p_good(self) -> float:
        return self.P.prob_of(self.good)

    def violations(self) -> list[str]:
        """Names of the invariants that fail at SLACK; empty when consistent."""
        out = []
        if self.p_good < 1.0 - 1.0 / self.r - SLACK:
            out.append("P(good) >= 1 - 1/r")
        if total_variation(self.P, self.p_tilde) > 2.0 / self.r + SLACK:
            out.append("|P - P~|_1 <= 2/r")
        if np.any(self.alpha * self.p_tilde.probs > self.Q.probs + SLACK):
            out.append("alpha P~ <= Q")
        expected_alpha = (self.r - 1.0) / self.r * 2.0 ** (-self.r * (self.a + 1.0))
        if not math.isclose(self.alpha, expected_alpha, rel_tol=1e-12, abs_tol=0.0):
            out.append("alpha = ((r-1)/r) 2^-r(a+1)")
        return out

    def to_json(self) -> dict:
        return {"a": self.a, "r": self.r,
                "good": [s for s in self.P.alphabet if s in self.good],
                "alpha": self.alpha, "p_tilde": self.p_tilde.to_json()}


def good_set(P: FiniteDist, Q: FiniteDist, exponent: float) -> frozenset:
    """{i : P(i) / 2^exponent <= Q(i)}; ties count as good."""
    scale = 2.0 ** (-exponent)
    return frozenset(s for s, p, q in zip(P.alphabet, P.probs, Q.probs) if p * scale <= q)


def decompose(P: FiniteDist, Q: FiniteDist, r: float) -> SubstateDecomposition:
    """Build the decomposition (good set, P~, alpha) for P against Q.

    Raises InfiniteDivergence when S(P||Q) is infinite and ValueError for r < 1.
    """
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    a = relative_entropy(P, Q)
    if math.isinf(a):
        raise InfiniteDivergence("substate undefined: S(P||Q) is infinite")
    good = good_set(P, Q, r * (a + 1.0))
    mask = np.array([s in good for s in P.alphabet])
    mass = float(P.probs[mask].sum())
    if mask.all():
        p_tilde = P
    else:
        p_tilde = FiniteDist(P.alphabet, np.where(mask, P.probs, 0.0) / mass)
    alpha = (r - 1.0) / r * 2.0 ** (-r * (a + 1.0))
    dec = SubstateDecomposition(P, Q, a, float(r), good, p_tilde, alpha)
    bad = dec.violations()
    if bad:  # pragma: no cover - would indicate a numerical defect
        raise ArithmeticError(f"substate invariants failed: {bad}")
    return dec
