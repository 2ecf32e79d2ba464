"""Correlated samplers driven by a stream of Q-samples.

Three constructions, each with a closed-form twin used to check it:

* ``rejection_pair``: one draw X ~ Q plus an accept bit chi with
  Pr[chi=1] = 2^-a and X | chi=1 ~ P.
* ``correlated_sequence``: t independent copies of the above; the accepted
  draws form a subsequence that is i.i.d. P given its length.
* ``las_vegas_sampler`` / ``multi_sampler``: scan an unbounded Q-stream and stop
  at a geometric time R (mean 2^a), emitting either the stopped symbol or an
  abort marker. Symbols outside the good set are never emitted and the abort
  probability is exactly 1 - P(good).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DominationError, InfiniteDivergence
from .probability import FiniteDist, relative_entropy
from .rng import stream
from .substate import good_set

DOMINATION_TOL = 1e-12


class _Abort:
    """The abort symbol (written 0 in traces)."""

    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "ABORT"

    def __reduce__(self):
        return (_Abort, ())


ABORT = _Abort()


def _check_domination(P: FiniteDist, Q: FiniteDist, a: float):
    if P.alphabet != Q.alphabet:
        raise ValueError("P and Q must share an alphabet")
    scale = 2.0 ** (-a)
    for s, p, q in zip(P.alphabet, P.probs, Q.probs):
        if p * scale > q * (1.0 + 1e-9) + DOMINATION_TOL:
            raise DominationError(
                f"2^-a P({s!r}) = {p * scale:.6g} exceeds Q({s!r}) = {q:.6g}", witness=s)


@dataclass(frozen=True, eq=False)
class RejectionPair:
    p: FiniteDist
    q: FiniteDist
    a: float
    accept_prob: np.ndarray

    def acceptance_probability(self) -> float:
        return float(self.q.probs @ self.accept_prob)

    def joint_law(self) -> dict:
        """Exact law of (X, chi)."""
        out = {}
        for s, q, g in zip(self.q.alphabet, self.q.probs, self.accept_prob):
            out[(s, 1)] = q * g
            out[(s, 0)] = q * (1.0 - g)
        return out

    def accepted_law(self) -> FiniteDist:
        """Exact law of X given chi = 1."""
        w = self.q.probs * self.accept_prob
        return FiniteDist(self.q.alphabet, w / w.sum())

    def draw(self, rng: np.random.Generator, size: int):
        """``size`` independent (X index, chi) pairs as two arrays."""
        x = rng.choice(len(self.q), size=size, p=self.q.probs)
        chi = rng.random(size) < self.accept_prob[x]
        return x, chi


def rejection_pair(P: FiniteDist, Q: FiniteDist, a: float) -> RejectionPair:
    """Pr[chi=1 | X=i] = P(i) / (2^a Q(i)); requires 2^-a P <= Q."""
    _check_domination(P, Q, a)
    q = Q.probs
    with np.errstate(divide="ignore", invalid="ignore"):
        acc = np.where(q > 0, P.probs * 2.0 ** (-a) / np.where(q > 0, q, 1.0), 0.0)
    acc = np.clip(acc, 0.0, 1.0)
    pair = RejectionPair(P, Q, float(a), acc)
    if not math.isclose(pair.acceptance_probability(), 2.0 ** (-a), rel_tol=1e-9, abs_tol=1e-12):
        raise ArithmeticError("acceptance probability drifted from 2^-a")
    return pair


def correlated_sequence(P: FiniteDist, Q: FiniteDist, a: float, t: int, seed: int):
    """Return ``(x_seq, y_subseq)``: t i.i.d. Q draws and the accepted ones."""
    if t < 1:
        raise ValueError("t must be >= 1")
    pair = rejection_pair(P, Q, a)
    x, chi = pair.draw(stream(seed), t)
    alpha = Q.alphabet
    x_seq = [alpha[i] for i in x]
    y_subseq = [alpha[i] for i in x[chi]]
    return x_seq, y_subseq


def is_subsequence(sub: Sequence, seq: Sequence) -> bool:
    it = iter(seq)
    return all(any(s == x for x in it) for s in sub)


@dataclass(frozen=True)
class SampleTrace:
    """One run of a Las-Vegas sampler; ``r is None`` means the cap was hit."""

    x_seq: tuple
    r: int | None
    y: object

    @property
    def aborted(self) -> bool:
        return self.y is ABORT


@dataclass(frozen=True, eq=False)
class LasVegasSampler:
    p: FiniteDist
    q: FiniteDist
    a: float
    good: frozenset
    eps: float
    gamma: np.ndarray = field(repr=False)
    beta: float

    @property
    def p_prime(self) -> np.ndarray:
        return np.array([p if s in self.good else 0.0
                         for s, p in zip(self.p.alphabet, self.p.probs)])

    @property
    def stop_given_x(self) -> np.ndarray:
        """Pr[Z != star | X = i] for each symbol i."""
        return self.gamma + self.beta * (1.0 - self.gamma)

    def stop_probability(self) -> float:
        return float(self.q.probs @ self.stop_given_x)

    def z_law(self, symbol) -> dict:
        i = self.q.index[symbol]
        g = float(self.gamma[i])
        return {symbol: g, ABORT: self.beta * (1.0 - g),
                "star": 1.0 - g - self.beta * (1.0 - g)}

    def expected_stopping_time(self) -> float:
        return 2.0 ** self.a

    def stopping_law(self, r: int) -> float:
        s = 2.0 ** (-self.a)
        return (1.0 - s) ** (r - 1) * s

    def tail(self, t_max: int | None) -> float:
        """Pr[R > t_max], i.e. (1 - 2^-a)^t_max."""
        if t_max is None:
            return 0.0
        return math.exp(t_max * math.log1p(-(2.0 ** (-self.a)))) if self.a > 0 else 0.0

    def default_cap(self) -> int:
        return 2 ** (math.ceil(self.a) + 20)

    def output_law(self, t_max: int | None = None) -> dict:
        """Exact law of Y, including ABORT; mass past ``t_max`` counts as abort."""
        keep = 1.0 - self.tail(t_max)
        law = {s: float(v) * keep for s, v in zip(self.p.alphabet, self.p_prime)}
        law[ABORT] = self.eps * keep + (1.0 - keep)
        return law

    def draw(self, rng: np.random.Generator, t_max: int | None = None) -> SampleTrace:
        cap = self.default_cap() if t_max is None else int(t_max)
        stop = self.stop_given_x
        alpha = self.q.alphabet
        seen = []
        pos, chunk = 0, 64
        while pos < cap:
            n = min(chunk, cap - pos)
            xs = rng.choice(len(alpha), size=n, p=self.q.probs)
            u = rng.random(n)
            hit = np.flatnonzero(u < stop[xs])
            if hit.size:
                j = int(hit[0])
                seen.append(xs[: j + 1])
                x_seq = tuple(alpha[i] for i in np.concatenate(seen))
                y = alpha[xs[j]] if u[j] < self.gamma[xs[j]] else ABORT
                return SampleTrace(x_seq, pos + j + 1, y)
            seen.append(xs)
            pos += n
            chunk *= 2
        return SampleTrace(tuple(alpha[i] for i in np.concatenate(seen)), None, ABORT)


def las_vegas_sampler(P: FiniteDist, Q: FiniteDist, eps_target: float,
                      *, exponent: float | None = None) -> LasVegasSampler:
    """Las-Vegas sampler for P over a Q-stream.

    The stopping exponent defaults to a = (S(P||Q) + 1) / eps_target, which
    makes the good set carry P-mass at least 1 - eps_target; the realized
    abort probability is eps = 1 - P(good). ``exponent`` overrides a directly.
    """
    if not 0 < eps_target <= 1:
        raise ValueError("eps_target must lie in (0, 1]")
    if P.alphabet != Q.alphabet:
        raise ValueError("P and Q must share an alphabet")
    s = relative_entropy(P, Q)
    if math.isinf(s):
        raise InfiniteDivergence("las-vegas sampler needs finite S(P||Q)")
    a = (s + 1.0) / eps_target if exponent is None else float(exponent)
    good = good_set(P, Q, a)
    p_good = min(1.0, P.prob_of(good))
    eps = max(0.0, 1.0 - p_good)
    scale = 2.0 ** (-a)
    q = Q.probs
    p_prime = np.array([p if sym in good else 0.0 for sym, p in zip(P.alphabet, P.probs)])
    with np.errstate(divide="ignore", invalid="ignore"):
        gamma = np.where(q > 0, p_prime * scale / np.where(q > 0, q, 1.0), 0.0)
    gamma = np.clip(gamma, 0.0, 1.0)
    if eps == 0.0:
        beta = 0.0
    else:
        beta = eps * scale / (1.0 - (1.0 - eps) * scale)
    sampler = LasVegasSampler(P, Q, a, good, eps, gamma, float(beta))
    if not math.isclose(sampler.stop_probability(), scale, rel_tol=1e-9, abs_tol=1e-15):
        raise ArithmeticError("stop probability drifted from 2^-a")
    return sampler


def multi_sampler(Q: FiniteDist, Ps: Sequence[FiniteDist], eps: float, seed: int,
                  t_max: int | None = None) -> list[SampleTrace]:
    """Run one Las-Vegas sampler per P_j against a single shared Q-stream.

    The shared stream comes from ``stream(seed, 0)``; sampler j draws its
    accept/abort coins from ``stream(seed, 1, j)``.
    """
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    samplers = [las_vegas_sampler(P, Q, eps) for P in Ps]
    caps = [s.default_cap() if t_max is None else int(t_max) for s in samplers]
    xrng = stream(seed, 0)
    coin = [stream(seed, 1, j) for j in range(len(samplers))]
    result: list = [None] * len(samplers)
    alpha = Q.alphabet
    xs_all = []
    pos, chunk = 0, 64
    live = set(range(len(samplers)))
    while live and pos < max(caps[j] for j in live):
        n = chunk
        xs = xrng.choice(len(alpha), size=n, p=Q.probs)
        xs_all.append(xs)
        for j in sorted(live):
            u = coin[j].random(n)
            s = samplers[j]
            hit = np.flatnonzero(u < s.stop_given_x[xs])
            if hit.size and pos + int(hit[0]) < caps[j]:
                k = int(hit[0])
                y = alpha[xs[k]] if u[k] < s.gamma[xs[k]] else ABORT
                result[j] = (pos + k + 1, y)
                live.discard(j)
            elif pos + n >= caps[j]:
                result[j] = (None, ABORT)
                live.discard(j)
        pos += n
        chunk *= 2
    x = np.concatenate(xs_all) if xs_all else np.zeros(0, dtype=int)
    traces = []
    for j, res in enumerate(result):
        r, y = res if res is not None else (None, ABORT)
        upto = r if r is not None else min(caps[j], len(x))
        traces.append(SampleTrace(tuple(alpha[i] for i in x[:upto]), r, y))
    return traces


def dump_traces(traces: Sequence[SampleTrace], Q: FiniteDist, seed: int, fh) -> None:
    """JSON-lines trace dump; y is the 1-based symbol index in Q, 0 for abort."""
    fh.write(json.dumps({"seed": seed, "alphabet": list(Q.alphabet)}) + "\n")
    for j, tr in enumerate(traces):
        y = 0 if tr.aborted else Q.index[tr.y] + 1
        fh.write(json.dumps({"j": j, "r": tr.r, "y": y}) + "\n")
