"""Exact finite distributions and the information functionals built on them.

All logarithms are base 2. Relative entropy returns ``math.inf`` (not an
exception) when the first argument escapes the support of the second.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import AlphabetMismatch, InvalidDistribution

SUM_TOL = 1e-12
IDENTITY_TOL = 1e-9


def _xlogx_sum(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


@dataclass(frozen=True, eq=False)
class FiniteDist:
    """Probability vector over an ordered finite alphabet."""

    alphabet: tuple
    probs: np.ndarray

    def __post_init__(self):
        alphabet = tuple(self.alphabet)
        probs = np.array(self.probs, dtype=float).reshape(-1)
        if not alphabet:
            raise InvalidDistribution("alphabet must be non-empty")
        if len(set(alphabet)) != len(alphabet):
            raise InvalidDistribution("alphabet has repeated symbols")
        if probs.shape != (len(alphabet),):
            raise InvalidDistribution(
                f"{probs.size} probabilities for {len(alphabet)} symbols")
        if not np.all(np.isfinite(probs)) or probs.min() < 0:
            raise InvalidDistribution("probabilities must be finite and >= 0")
        if abs(probs.sum() - 1.0) > SUM_TOL:
            raise InvalidDistribution(f"probabilities sum to {probs.sum()!r}")
        probs.setflags(write=False)
        object.__setattr__(self, "alphabet", alphabet)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_dict(cls, table: Mapping, alphabet: Sequence | None = None) -> "FiniteDist":
        if alphabet is None:
            alphabet = list(table)
        return cls(tuple(alphabet), [table.get(s, 0.0) for s in alphabet])

    @classmethod
    def uniform(cls, alphabet: Iterable) -> "FiniteDist":
        alphabet = tuple(alphabet)
        return cls(alphabet, np.full(len(alphabet), 1.0 / len(alphabet)))

    @classmethod
    def point(cls, alphabet: Iterable, symbol) -> "FiniteDist":
        alphabet = tuple(alphabet)
        probs = np.zeros(len(alphabet))
        probs[alphabet.index(symbol)] = 1.0
        return cls(alphabet, probs)

    @classmethod
    def normalized(cls, alphabet: Iterable, weights) -> "FiniteDist":
        """Build from nonnegative weights, renormalizing away rounding drift."""
        w = np.asarray(weights, dtype=float)
        return cls(tuple(alphabet), w / w.sum())

    @cached_property
    def index(self) -> dict:
        return {s: i for i, s in enumerate(self.alphabet)}

    def __len__(self):
        return len(self.alphabet)

    def __getitem__(self, symbol) -> float:
        i = self.index.get(symbol)
        return 0.0 if i is None else float(self.probs[i])

    def prob_of(self, event: Iterable) -> float:
        return float(sum(self[s] for s in set(event)))

    @property
    def support(self) -> tuple:
        return tuple(s for s, p in zip(self.alphabet, self.probs) if p > 0)

    def as_dict(self) -> dict:
        return dict(zip(self.alphabet, self.probs.tolist()))

    def same_alphabet(self, other: "FiniteDist") -> bool:
        return self.alphabet == other.alphabet

    def restricted(self, event: Iterable) -> "FiniteDist":
        """Conditional distribution given the event (same alphabet)."""
        mask = np.array([s in set(event) for s in self.alphabet])
        mass = self.probs[mask].sum()
        if mass <= 0:
            raise InvalidDistribution("conditioning on a null event")
        probs = np.where(mask, self.probs, 0.0) / mass
        return FiniteDist(self.alphabet, probs)

    def to_json(self) -> dict:
        return {"alphabet": list(self.alphabet), "probs": self.probs.tolist()}

    @classmethod
    def from_json(cls, obj: Mapping) -> "FiniteDist":
        try:
            alphabet = [_hashable(s) for s in obj["alphabet"]]
            return cls(tuple(alphabet), obj["probs"])
        except KeyError as exc:
            raise InvalidDistribution(f"missing field {exc.args[0]!r}") from None

    def __repr__(self):
        body = ", ".join(f"{s!r}: {p:.6g}" for s, p in zip(self.alphabet, self.probs))
        return f"FiniteDist({{{body}}})"


def _hashable(v):
    return tuple(_hashable(x) for x in v) if isinstance(v, list) else v


def _check_same(P: FiniteDist, Q: FiniteDist):
    if P.alphabet != Q.alphabet:
        raise AlphabetMismatch("distributions are over different alphabets")


def entropy(P: FiniteDist) -> float:
    """Shannon entropy in bits, with 0 log 0 = 0."""
    return _xlogx_sum(P.probs)


def relative_entropy(P: FiniteDist, Q: FiniteDist) -> float:
    """S(P||Q) in bits; ``math.inf`` when P(i) > 0 = Q(i) for some i."""
    _check_same(P, Q)
    p, q = P.probs, Q.probs
    on = p > 0
    if np.any(q[on] == 0):
        return math.inf
    return float(max(0.0, (p[on] * np.log2(p[on] / q[on])).sum()))


def total_variation(P: FiniteDist, Q: FiniteDist) -> float:
    """L1 distance sum_i |P(i) - Q(i)|, in [0, 2]."""
    _check_same(P, Q)
    return float(np.abs(P.probs - Q.probs).sum())


def two_point(P: FiniteDist, event: Iterable) -> FiniteDist:
    """(P(E), 1 - P(E)) over the alphabet (True, False)."""
    ev = set(event)
    pe = P.prob_of(ev)
    rest = P.prob_of(s for s in P.alphabet if s not in ev)
    return FiniteDist.normalized((True, False), [pe, rest])


@dataclass(frozen=True, eq=False)
class JointDist:
    """Joint law of named finite random variables, stored as a dense array."""

    axes: tuple
    ranges: tuple
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        axes = tuple(self.axes)
        ranges = tuple(tuple(r) for r in self.ranges)
        probs = np.array(self.probs, dtype=float)
        if len(axes) != len(ranges) or len(set(axes)) != len(axes):
            raise InvalidDistribution("axes must be distinct and match ranges")
        if probs.shape != tuple(len(r) for r in ranges):
            raise InvalidDistribution(
                f"table shape {probs.shape} does not match ranges")
        if not np.all(np.isfinite(probs)) or probs.min() < 0:
            raise InvalidDistribution("probabilities must be finite and >= 0")
        if abs(probs.sum() - 1.0) > SUM_TOL:
            raise InvalidDistribution(f"joint sums to {probs.sum()!r}")
        probs.setflags(write=False)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "ranges", ranges)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_dict(cls, axes, ranges, table: Mapping) -> "JointDist":
        ranges = tuple(tuple(r) for r in ranges)
        arr = np.zeros(tuple(len(r) for r in ranges))
        idx = [{s: i for i, s in enumerate(r)} for r in ranges]
        for key, p in table.items():
            arr[tuple(ix[k] for ix, k in zip(idx, key))] += p
        return cls(tuple(axes), ranges, arr)

    @classmethod
    def product(cls, *named: tuple) -> "JointDist":
        """Independent product of ``(name, FiniteDist)`` pairs."""
        arr = np.ones(())
        for _, d in named:
            arr = np.multiply.outer(arr, d.probs)
        return cls(tuple(n for n, _ in named), tuple(d.alphabet for _, d in named), arr)

    def axis_index(self, names) -> tuple:
        if isinstance(names, str):
            names = (names,)
        try:
            return tuple(self.axes.index(n) for n in names)
        except ValueError:
            raise KeyError(f"unknown axis in {names!r}; axes are {self.axes}") from None

    def marginal(self, names) -> "JointDist":
        keep = self.axis_index(names)
        drop = tuple(i for i in range(len(self.axes)) if i not in keep)
        arr = self.probs.sum(axis=drop) if drop else self.probs
        # sum() keeps the surviving axes in their original order
        order = sorted(keep)
        arr = np.transpose(arr, [order.index(k) for k in keep])
        return JointDist(tuple(self.axes[i] for i in keep),
                         tuple(self.ranges[i] for i in keep), arr)

    def to_finite(self, names=None) -> FiniteDist:
        """Marginal as a FiniteDist; single-axis symbols stay bare, else tuples."""
        j = self if names is None else self.marginal(names)
        if len(j.axes) == 1:
            return FiniteDist(j.ranges[0], j.probs)
        keys = tuple(itertools.product(*j.ranges))
        return FiniteDist(keys, j.probs.reshape(-1))

    def entropy(self, names=None) -> float:
        j = self if names is None else self.marginal(names)
        return _xlogx_sum(j.probs.reshape(-1))

    def condition(self, assignment: Mapping) -> "JointDist":
        """Law of the remaining axes given ``{axis: value}``."""
        sl = [slice(None)] * len(self.axes)
        for name, val in assignment.items():
            i = self.axis_index(name)[0]
            sl[i] = self.ranges[i].index(val)
        arr = self.probs[tuple(sl)]
        mass = arr.sum()
        if mass <= 0:
            raise InvalidDistribution("conditioning on a null event")
        rest = [i for i in range(len(self.axes)) if self.axes[i] not in assignment]
        return JointDist(tuple(self.axes[i] for i in rest),
                         tuple(self.ranges[i] for i in rest), arr / mass)

    def to_json(self) -> dict:
        return {"axes": list(self.axes), "ranges": [list(r) for r in self.ranges],
                "probs": self.probs.tolist()}

    @classmethod
    def from_json(cls, obj: Mapping) -> "JointDist":
        try:
            ranges = [[_hashable(s) for s in r] for r in obj["ranges"]]
            return cls(tuple(obj["axes"]), ranges, np.asarray(obj["probs"], dtype=float))
        except KeyError as exc:
            raise InvalidDistribution(f"missing field {exc.args[0]!r}") from None


def _as_names(a) -> tuple:
    return (a,) if isinstance(a, str) else tuple(a)


def _disjoint(*sets):
    seen = set()
    for s in sets:
        if seen & set(s):
            raise ValueError(f"axis sets overlap: {sets}")
        seen |= set(s)


def mutual_information(J: JointDist, A, B) -> float:
    """I(A:B) = H(A) + H(B) - H(AB) in bits."""
    A, B = _as_names(A), _as_names(B)
    _disjoint(A, B)
    val = J.entropy(A) + J.entropy(B) - J.entropy(A + B)
    return max(val, 0.0) if val > -IDENTITY_TOL else val


def conditional_mutual_information(J: JointDist, A, B, Z) -> float:
    """E_z I(A:B | Z=z), evaluated literally as an average over z."""
    A, B, Z = _as_names(A), _as_names(B), _as_names(Z)
    _disjoint(A, B, Z)
    if not Z:
        return mutual_information(J, A, B)
    JZ = J.marginal(Z)
    total = 0.0
    for idx in zip(*np.nonzero(JZ.probs)):
        pz = JZ.probs[idx]
        assignment = {name: JZ.ranges[i][k] for i, (name, k) in enumerate(zip(Z, idx))}
        total += pz * mutual_information(J.condition(assignment).marginal(A + B), A, B)
    return float(total)


@dataclass(frozen=True, eq=False)
class PartitionedInput:
    """mu = sum_d kappa(d) mu_d with every mu_d a product over (x, y)."""

    mu: JointDist
    kappa: FiniteDist
    components: Mapping

    def __post_init__(self):
        if set(self.components) != set(self.kappa.alphabet):
            raise InvalidDistribution("components must be indexed by kappa's alphabet")
        mix = np.zeros_like(self.mu.probs)
        for d, comp in self.components.items():
            if comp.ranges != self.mu.ranges:
                raise InvalidDistribution(f"component {d!r} has different ranges")
            px = comp.probs.sum(axis=1)
            py = comp.probs.sum(axis=0)
            if np.abs(comp.probs - np.outer(px, py)).max() > IDENTITY_TOL:
                raise InvalidDistribution(f"component {d!r} is not a product distribution")
            mix = mix + self.kappa[d] * comp.probs
        if np.abs(mix - self.mu.probs).max() > IDENTITY_TOL:
            raise InvalidDistribution("kappa-mixture of components differs from mu")

    @classmethod
    def trivial(cls, mu: JointDist) -> "PartitionedInput":
        """Single-component partition of a product distribution."""
        return cls(mu, FiniteDist.point((0,), 0), {0: mu})

    @classmethod
    def from_components(cls, kappa: FiniteDist, components: Mapping) -> "PartitionedInput":
        first = next(iter(components.values()))
        mix = sum(kappa[d] * c.probs for d, c in components.items())
        mu = JointDist(first.axes, first.ranges, mix / mix.sum())
        return cls(mu, kappa, dict(components))

    def to_json(self) -> dict:
        return {"kappa": self.kappa.to_json(),
                "components": [{"d": d, "mu": self.components[d].to_json()}
                               for d in self.kappa.alphabet]}

    @classmethod
    def from_json(cls, obj: Mapping) -> "PartitionedInput":
        kappa = FiniteDist.from_json(obj["kappa"])
        comps = {_hashable(c["d"]): JointDist.from_json(c["mu"]) for c in obj["components"]}
        return cls.from_components(kappa, comps)


# Tail bounds used to size Monte-Carlo checks and retry budgets.

def hoeffding_tail(eps: float, r: int) -> float:
    """Two-sided bound 2 exp(-2 eps^2 r) on deviation of a mean of r [0,1] draws."""
    return 2.0 * math.exp(-2.0 * eps * eps * r)


def binomial_lower_tail(t: int, q: float) -> float:
    """Bound exp(-tq/8) on Pr[B(t,q) < tq/2]."""
    return math.exp(-t * q / 8.0)


def mc_band(n: int, sigmas: float = 3.0) -> float:
    """Distribution-free sigma band for a mean of n values in [0, 1].

    Uses the worst-case standard deviation 1/2 of a [0,1] variable.
    """
    return sigmas * 0.5 / math.sqrt(n)
