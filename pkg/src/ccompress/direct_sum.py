"""Direct-sum lower bounds assembled from computed quantities.

Bounds are reported as computed, including non-positive (vacuous) values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ProtocolError
from .probability import IDENTITY_TOL, JointDist, PartitionedInput
from .protocol import (FunctionSpec, ProtocolTree, brute_force_C, conditional_information_cost,
                       tensor_partition, tensor_protocol)

MULTIROUND = "k-round direct sum (conditional information cost)"
MULTIROUND_PRODUCT = "k-round direct sum (product distribution)"
SIMULTANEOUS = "simultaneous-message direct sum"
IC_FROM_C = "information cost from distributional complexity"


@dataclass(frozen=True)
class BoundReport:
    m: int
    k: int | None
    eps: float
    delta: float
    c_value: float
    h_kappa: float
    bound: float
    provenance: str
    n: int | None = None

    @property
    def vacuous(self) -> bool:
        return self.bound <= 0

    def recompute(self) -> float:
        if self.provenance == SIMULTANEOUS:
            return _simul_formula(self.m, self.n, self.eps, self.c_value)
        return _multiround_formula(self.m, self.k, self.eps, self.c_value, self.h_kappa)

    def to_json(self) -> dict:
        return {"m": self.m, "k": self.k, "n": self.n, "eps": self.eps, "delta": self.delta,
                "c_value": self.c_value, "h_kappa": self.h_kappa, "bound": self.bound,
                "vacuous": self.vacuous, "provenance": self.provenance}


def _multiround_formula(m, k, eps, c, h):
    return m * (eps ** 2 / (2 * k) * c - 2 - h)


def _simul_formula(m, n, eps, r_tilde):
    return (m * eps / 3) * (r_tilde - 2 * math.log2(n + 1)
                            - 2 * math.log2(1 / (eps ** 2 * (1 - eps))) - 2 / eps - 8)


def _check(m, eps, delta):
    if m < 1:
        raise ValueError("m must be >= 1")
    if not 0 < eps:
        raise ValueError("eps must be positive")
    if not 0 <= delta <= 1:
        raise ValueError("delta must lie in [0, 1]")


def multiround_bound(m: int, k: int, eps: float, delta: float, c_value: float,
                     h_kappa: float = 0.0) -> BoundReport:
    """m * (eps^2/(2k) * C - 2 - H(kappa)); h_kappa = 0 is the product case."""
    _check(m, eps, delta)
    if k < 1:
        raise ValueError("k must be >= 1")
    if h_kappa < 0:
        raise ValueError("h_kappa must be non-negative")
    prov = MULTIROUND if h_kappa > 0 else MULTIROUND_PRODUCT
    return BoundReport(m, k, eps, delta, float(c_value), float(h_kappa),
                       _multiround_formula(m, k, eps, c_value, h_kappa), prov)


def simul_bound(m: int, n: int, eps: float, delta: float, r_tilde: float) -> BoundReport:
    """(m eps/3)(R - 2 log(n+1) - 2 log(1/(eps^2 (1-eps))) - 2/eps - 8)."""
    _check(m, eps, delta)
    if not eps < 1:
        raise ValueError("eps must be below 1")
    if n < 0:
        raise ValueError("n must be >= 0")
    return BoundReport(m, None, eps, delta, float(r_tilde), 0.0,
                       _simul_formula(m, n, eps, r_tilde), SIMULTANEOUS, n)


def simul_threshold(n: int, eps: float) -> float:
    """The r_tilde at which simul_bound is exactly zero."""
    return 2 * math.log2(n + 1) + 2 * math.log2(1 / (eps ** 2 * (1 - eps))) + 2 / eps + 8


@dataclass(frozen=True)
class SuperadditivityReport:
    m: int
    single: float
    tensor: float

    @property
    def residual(self) -> float:
        return self.tensor - self.m * self.single

    @property
    def ok(self) -> bool:
        return abs(self.residual) <= IDENTITY_TOL

    def to_json(self) -> dict:
        return {"m": self.m, "single": self.single, "tensor": self.tensor,
                "residual": self.residual, "ok": self.ok}


def superadditivity_experiment(proto: ProtocolTree, f: FunctionSpec | None,
                               pm: PartitionedInput, m: int) -> SuperadditivityReport:
    """Conditional information cost of m independent copies versus m times one copy."""
    if f is not None and (f.x_range, f.y_range) != (proto.x_range, proto.y_range):
        raise ProtocolError("function and protocol disagree on input ranges")
    single = conditional_information_cost(proto, pm)
    if m == 1:
        return SuperadditivityReport(1, single, single)
    tensor = conditional_information_cost(tensor_protocol(proto, m), tensor_partition(pm, m))
    return SuperadditivityReport(m, single, tensor)


def is_product(mu: JointDist, tol: float = 1e-12) -> bool:
    px = mu.probs.sum(axis=1)
    py = mu.probs.sum(axis=0)
    return bool(np.abs(np.outer(px, py) - mu.probs).max() <= tol)


def ic_lower_bound_from_C(f: FunctionSpec, mu: JointDist, delta: float, eps: float, k: int,
                          oracle=brute_force_C, bits_per_round: int = 2) -> BoundReport:
    """eps^2/(2k) * C(delta + 2 eps) - 2 for product mu, with C from ``oracle``."""
    if not is_product(mu):
        raise ValueError("the input distribution must be a product")
    target = delta + 2 * eps
    c = 0 if target >= 1 else oracle(f, mu, target, k, bits_per_round)
    rep = multiround_bound(1, k, eps, min(delta, 1.0), c, 0.0)
    return BoundReport(1, k, eps, delta, float(c), 0.0, rep.bound, IC_FROM_C)
