"""Two-party private-coin protocols as explicit finite trees.

A :class:`ProtocolTree` fixes, for each round, who speaks and over what
alphabet; the speaker's message law depends only on their own input and the
messages so far. The answer is a function of the full transcript. Everything
here is computed exactly by enumerating root-to-leaf paths.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Mapping

import numpy as np

from .errors import ProtocolError, ResourceGuard
from .probability import (FiniteDist, JointDist, PartitionedInput,
                          mutual_information, _hashable)

ALICE, BOB = "A", "B"
MAX_TRANSCRIPTS = 200_000


def _key(v) -> str:
    return v if isinstance(v, str) else json.dumps(v)


@dataclass(frozen=True, eq=False)
class FunctionSpec:
    """f (or a relation) given as acceptable answer sets per input pair."""

    x_range: tuple
    y_range: tuple
    z_range: tuple
    table: Mapping

    def __post_init__(self):
        for x in self.x_range:
            for y in self.y_range:
                ok = self.table.get((x, y))
                if not ok:
                    raise ProtocolError(f"no acceptable answers for input {(x, y)!r}")
                if not set(ok) <= set(self.z_range):
                    raise ProtocolError(f"answers for {(x, y)!r} outside z_range")

    @classmethod
    def from_function(cls, x_range, y_range, fn: Callable) -> "FunctionSpec":
        table = {(x, y): frozenset([fn(x, y)]) for x in x_range for y in y_range}
        zs = []
        for v in table.values():
            for z in v:
                if z not in zs:
                    zs.append(z)
        return cls(tuple(x_range), tuple(y_range), tuple(zs), table)

    def accepts(self, x, y, z) -> bool:
        return z in self.table[(x, y)]

    def restrict(self, xs, ys) -> "FunctionSpec":
        return FunctionSpec(tuple(xs), tuple(ys), self.z_range,
                            {(x, y): self.table[(x, y)] for x in xs for y in ys})

    def to_json(self) -> dict:
        return {"x": list(self.x_range), "y": list(self.y_range), "z": list(self.z_range),
                "accept": {f"{_key(x)},{_key(y)}": [z for z in self.z_range
                                                    if z in self.table[(x, y)]]
                           for x in self.x_range for y in self.y_range}}

    @classmethod
    def from_json(cls, obj: Mapping) -> "FunctionSpec":
        xs = tuple(_hashable(v) for v in obj["x"])
        ys = tuple(_hashable(v) for v in obj["y"])
        zs = tuple(_hashable(v) for v in obj["z"])
        lookup = {f"{_key(x)},{_key(y)}": (x, y) for x in xs for y in ys}
        table = {}
        for k, v in obj["accept"].items():
            if k not in lookup:
                raise ProtocolError(f"accept key {k!r} does not name an input pair")
            table[lookup[k]] = frozenset(_hashable(z) for z in v)
        return cls(xs, ys, zs, table)


@dataclass(frozen=True)
class Round:
    owner: str
    alphabet: tuple

    def __post_init__(self):
        if self.owner not in (ALICE, BOB):
            raise ProtocolError(f"owner must be 'A' or 'B', got {self.owner!r}")
        if not self.alphabet:
            raise ProtocolError("round alphabet must be non-empty")

    @property
    def bits(self) -> int:
        return math.ceil(math.log2(len(self.alphabet))) if len(self.alphabet) > 1 else 0


@dataclass(frozen=True, eq=False)
class ProtocolTree:
    """k-round private-coin protocol.

    ``policy`` maps ``(round, owner_input, prefix)`` (0-based round, prefix a
    tuple of earlier messages) to a FiniteDist over that round's alphabet; it
    may be a dict or a callable. ``output`` maps full transcripts to answers,
    likewise dict or callable.
    """

    x_range: tuple
    y_range: tuple
    rounds: tuple
    policy: object = field(repr=False)
    output: object = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "x_range", tuple(self.x_range))
        object.__setattr__(self, "y_range", tuple(self.y_range))
        object.__setattr__(self, "rounds", tuple(self.rounds))

    @property
    def k(self) -> int:
        return len(self.rounds)

    def message_law(self, i: int, inp, prefix: tuple) -> FiniteDist:
        try:
            d = self.policy(i, inp, prefix) if callable(self.policy) else \
                self.policy[(i, inp, prefix)]
        except KeyError:
            raise ProtocolError(
                f"no policy for round {i + 1}, input {inp!r}, prefix {prefix!r}") from None
        if d.alphabet != self.rounds[i].alphabet:
            raise ProtocolError(f"round {i + 1} policy is over the wrong alphabet")
        return d

    def answer(self, transcript: tuple):
        try:
            return self.output(transcript) if callable(self.output) else \
                self.output[transcript]
        except KeyError:
            raise ProtocolError(f"no output for reachable transcript {transcript!r}") from None

    def speaker_input(self, i: int, x, y):
        return x if self.rounds[i].owner == ALICE else y

    def paths(self, x, y):
        """Yield (transcript, probability) for every positive-probability leaf."""
        stack = [((), 1.0)]
        while stack:
            prefix, p = stack.pop()
            i = len(prefix)
            if i == self.k:
                yield prefix, p
                continue
            law = self.message_law(i, self.speaker_input(i, x, y), prefix)
            for s, q in zip(reversed(law.alphabet), law.probs[::-1]):
                if q > 0:
                    stack.append((prefix + (s,), p * q))

    @cached_property
    def transcript_table(self):
        """(transcripts, array[x, y, t]) over all transcripts reachable for some input."""
        per = {}
        order = {}
        for xi, x in enumerate(self.x_range):
            for yi, y in enumerate(self.y_range):
                for t, p in self.paths(x, y):
                    if t not in order:
                        order[t] = len(order)
                        if len(order) > MAX_TRANSCRIPTS:
                            raise ResourceGuard("too many reachable transcripts")
                    per[(xi, yi, order[t])] = per.get((xi, yi, order[t]), 0.0) + p
        ts = sorted(order, key=order.get)
        arr = np.zeros((len(self.x_range), len(self.y_range), len(ts)))
        for idx, p in per.items():
            arr[idx] = p
        for t in ts:
            self.answer(t)
        return tuple(ts), arr

    def to_json(self) -> dict:
        if callable(self.policy) or callable(self.output):
            raise ProtocolError("only table-backed protocols serialize")
        pol = [{"round": i + 1, "input": inp, "prefix": list(pre), "probs": d.probs.tolist()}
               for (i, inp, pre), d in self.policy.items()]
        out = [{"transcript": list(t), "z": z} for t, z in self.output.items()]
        return {"type": "tree", "x": list(self.x_range), "y": list(self.y_range),
                "rounds": [{"owner": r.owner, "alphabet": list(r.alphabet)} for r in self.rounds],
                "policy": pol, "output": out}

    @classmethod
    def from_json(cls, obj: Mapping) -> "ProtocolTree":
        rounds = tuple(Round(r["owner"], tuple(_hashable(s) for s in r["alphabet"]))
                       for r in obj["rounds"])
        policy = {}
        for n, e in enumerate(obj["policy"]):
            i = int(e["round"]) - 1
            if not 0 <= i < len(rounds):
                raise ProtocolError(f"policy entry {n}: round {e['round']} out of range")
            policy[(i, _hashable(e["input"]), tuple(_hashable(s) for s in e["prefix"]))] = \
                FiniteDist(rounds[i].alphabet, e["probs"])
        output = {tuple(_hashable(s) for s in e["transcript"]): _hashable(e["z"])
                  for e in obj["output"]}
        return cls(tuple(_hashable(v) for v in obj["x"]), tuple(_hashable(v) for v in obj["y"]),
                   rounds, policy, output)


@dataclass(frozen=True, eq=False)
class SimulProtocol:
    """Simultaneous-message protocol: two private-coin messages and a referee.

    ``alice`` is an array of shape (|X|, |M_A|) whose rows are message laws,
    ``bob`` likewise; ``referee[a][b]`` is the answer on messages (a, b).
    """

    x_range: tuple
    y_range: tuple
    a_msgs: tuple
    b_msgs: tuple
    alice: np.ndarray = field(repr=False)
    bob: np.ndarray = field(repr=False)
    referee: np.ndarray = field(repr=False)

    def __post_init__(self):
        alice = np.asarray(self.alice, dtype=float)
        bob = np.asarray(self.bob, dtype=float)
        ref = np.empty((len(self.a_msgs), len(self.b_msgs)), dtype=object)
        ref[...] = [list(row) for row in self.referee]
        if alice.shape != (len(self.x_range), len(self.a_msgs)):
            raise ProtocolError("alice policy shape mismatch")
        if bob.shape != (len(self.y_range), len(self.b_msgs)):
            raise ProtocolError("bob policy shape mismatch")
        for name, arr in (("alice", alice), ("bob", bob)):
            if arr.min() < 0 or np.abs(arr.sum(axis=1) - 1).max() > 1e-12:
                raise ProtocolError(f"{name} policy rows must be distributions")
        for k, v in (("x_range", tuple(self.x_range)), ("y_range", tuple(self.y_range)),
                     ("a_msgs", tuple(self.a_msgs)), ("b_msgs", tuple(self.b_msgs)),
                     ("alice", alice), ("bob", bob), ("referee", ref)):
            object.__setattr__(self, k, v)

    def alice_law(self, x) -> FiniteDist:
        return FiniteDist(self.a_msgs, self.alice[self.x_range.index(x)])

    def bob_law(self, y) -> FiniteDist:
        return FiniteDist(self.b_msgs, self.bob[self.y_range.index(y)])

    def correct_table(self, f: FunctionSpec) -> np.ndarray:
        """c[x, y, a, b] = 1 if referee's answer on (a, b) is acceptable for (x, y)."""
        zs = {z: i for i, z in enumerate(f.z_range)}
        try:
            ref_idx = np.vectorize(lambda z: zs[z], otypes=[int])(self.referee)
        except KeyError as exc:
            raise ProtocolError(f"referee answer {exc.args[0]!r} not in z_range") from None
        out = np.zeros((len(self.x_range), len(self.y_range)) + ref_idx.shape, dtype=bool)
        for xi, x in enumerate(self.x_range):
            for yi, y in enumerate(self.y_range):
                acc = np.zeros(len(f.z_range), dtype=bool)
                acc[[zs[z] for z in f.table[(x, y)]]] = True
                out[xi, yi] = acc[ref_idx]
        return out

    def error_table(self, f: FunctionSpec) -> np.ndarray:
        _check_ranges(self, f)
        c = self.correct_table(f)
        ok = np.einsum("xa,yb,xyab->xy", self.alice, self.bob, c.astype(float))
        return np.clip(1.0 - ok, 0.0, 1.0)

    def message_joint(self, mu_x: FiniteDist, who: str = ALICE) -> JointDist:
        pol = self.alice if who == ALICE else self.bob
        inputs = self.x_range if who == ALICE else self.y_range
        msgs = self.a_msgs if who == ALICE else self.b_msgs
        if mu_x.alphabet != inputs:
            raise ProtocolError("input distribution over the wrong range")
        return JointDist(("in", "m"), (inputs, msgs), mu_x.probs[:, None] * pol)

    def to_json(self) -> dict:
        return {"type": "simultaneous", "x": list(self.x_range), "y": list(self.y_range),
                "alice_messages": list(self.a_msgs), "bob_messages": list(self.b_msgs),
                "alice_policy": [{"input": x, "probs": row.tolist()}
                                 for x, row in zip(self.x_range, self.alice)],
                "bob_policy": [{"input": y, "probs": row.tolist()}
                               for y, row in zip(self.y_range, self.bob)],
                "referee": [list(r) for r in self.referee]}

    @classmethod
    def from_json(cls, obj: Mapping) -> "SimulProtocol":
        xs = tuple(_hashable(v) for v in obj["x"])
        ys = tuple(_hashable(v) for v in obj["y"])
        am = tuple(_hashable(v) for v in obj["alice_messages"])
        bm = tuple(_hashable(v) for v in obj["bob_messages"])
        ap = {_hashable(e["input"]): e["probs"] for e in obj["alice_policy"]}
        bp = {_hashable(e["input"]): e["probs"] for e in obj["bob_policy"]}
        try:
            alice = [ap[x] for x in xs]
            bob = [bp[y] for y in ys]
        except KeyError as exc:
            raise ProtocolError(f"missing policy for input {exc.args[0]!r}") from None
        ref = [[_hashable(z) for z in row] for row in obj["referee"]]
        return cls(xs, ys, am, bm, alice, bob, ref)


def load_protocol(obj: Mapping):
    kind = obj.get("type", "tree")
    if kind == "tree":
        return ProtocolTree.from_json(obj)
    if kind == "simultaneous":
        return SimulProtocol.from_json(obj)
    raise ProtocolError(f"unknown protocol type {kind!r}")


@dataclass(frozen=True)
class ErrorReport:
    worst_case: float
    distributional: float
    per_input: dict

    def to_json(self) -> dict:
        return {"worst_case": self.worst_case, "distributional": self.distributional,
                "per_input": [{"x": x, "y": y, "error": e}
                              for (x, y), e in self.per_input.items()]}


def _check_ranges(proto, f: FunctionSpec, mu: JointDist | None = None):
    if proto.x_range != f.x_range or proto.y_range != f.y_range:
        raise ProtocolError("protocol and function disagree on input ranges")
    if mu is not None and mu.ranges != (proto.x_range, proto.y_range):
        raise ProtocolError("input distribution ranges differ from the protocol's")


def transcript_distribution(proto: ProtocolTree, x, y) -> FiniteDist:
    """Exact law of the transcript on input (x, y)."""
    if x not in proto.x_range or y not in proto.y_range:
        raise ProtocolError(f"input {(x, y)!r} out of range")
    table = {}
    for t, p in proto.paths(x, y):
        table[t] = table.get(t, 0.0) + p
    ts = sorted(table, key=repr)
    return FiniteDist.normalized(ts, [table[t] for t in ts])


def error_table(proto, f: FunctionSpec) -> np.ndarray:
    """Per-input error probabilities as an (|X|, |Y|) array."""
    _check_ranges(proto, f)
    if isinstance(proto, SimulProtocol):
        return proto.error_table(f)
    ts, arr = proto.transcript_table
    err = np.zeros(arr.shape[:2])
    answers = [proto.answer(t) for t in ts]
    for xi, x in enumerate(proto.x_range):
        for yi, y in enumerate(proto.y_range):
            wrong = np.array([z not in f.table[(x, y)] for z in answers], dtype=float)
            err[xi, yi] = arr[xi, yi] @ wrong
    return np.clip(err, 0.0, 1.0)


def evaluate_error(proto, f: FunctionSpec, mu: JointDist) -> ErrorReport:
    _check_ranges(proto, f, mu)
    err = error_table(proto, f)
    per = {(x, y): float(err[i, j]) for i, x in enumerate(proto.x_range)
           for j, y in enumerate(proto.y_range)}
    return ErrorReport(float(err.max()), float((mu.probs * err).sum()), per)


def joint_xyt(proto: ProtocolTree, mu: JointDist) -> JointDist:
    if mu.ranges != (proto.x_range, proto.y_range):
        raise ProtocolError("input distribution ranges differ from the protocol's")
    ts, arr = proto.transcript_table
    joint = mu.probs[:, :, None] * arr
    return JointDist(("x", "y", "t"), (proto.x_range, proto.y_range, ts), joint / joint.sum())


def information_cost(proto, mu: JointDist) -> float:
    """I(XY : T) under input law mu."""
    if isinstance(proto, SimulProtocol):
        return simul_information_cost(proto, mu)
    return mutual_information(joint_xyt(proto, mu), ("x", "y"), ("t",))


def simul_information_cost(proto: SimulProtocol, mu: JointDist) -> float:
    """I(XY : M_A M_B) for a simultaneous protocol."""
    a, b = proto.alice, proto.bob
    joint = mu.probs[:, :, None, None] * a[:, None, :, None] * b[None, :, None, :]
    J = JointDist(("x", "y", "ma", "mb"),
                  (proto.x_range, proto.y_range, proto.a_msgs, proto.b_msgs), joint)
    return mutual_information(J, ("x", "y"), ("ma", "mb"))


def conditional_information_cost(proto, pm: PartitionedInput) -> float:
    """I(XY : T | D) = sum_d kappa(d) I(XY : T | D = d)."""
    return float(sum(pm.kappa[d] * information_cost(proto, pm.components[d])
                     for d in pm.kappa.alphabet if pm.kappa[d] > 0))


def communication_cost(proto, encoding: Mapping | None = None) -> int:
    """Worst-case bits sent.

    Without ``encoding`` each round costs ceil(log2 |alphabet|). With
    ``encoding[round][symbol] -> bitstring`` the cost is the longest encoded
    reachable transcript.
    """
    if isinstance(proto, SimulProtocol):
        bits = lambda n: math.ceil(math.log2(n)) if n > 1 else 0
        return bits(len(proto.a_msgs)) + bits(len(proto.b_msgs))
    if encoding is None:
        return sum(r.bits for r in proto.rounds)
    ts, _ = proto.transcript_table
    return max(sum(len(encoding[i][s]) for i, s in enumerate(t)) for t in ts)


# Independent copies.

def tensor_function(f: FunctionSpec, m: int) -> FunctionSpec:
    xs = tuple(itertools.product(f.x_range, repeat=m))
    ys = tuple(itertools.product(f.y_range, repeat=m))
    zs = tuple(itertools.product(f.z_range, repeat=m))
    table = {}
    for x in xs:
        for y in ys:
            table[(x, y)] = frozenset(itertools.product(
                *(f.table[(xc, yc)] for xc, yc in zip(x, y))))
    return FunctionSpec(xs, ys, zs, table)


def tensor_mu(mu: JointDist, m: int) -> JointDist:
    """mu^m regrouped as a law over (x-tuple, y-tuple)."""
    xr, yr = mu.ranges
    xs = tuple(itertools.product(xr, repeat=m))
    ys = tuple(itertools.product(yr, repeat=m))
    xi = {x: i for i, x in enumerate(xr)}
    yi = {y: i for i, y in enumerate(yr)}
    arr = np.empty((len(xs), len(ys)))
    for a, x in enumerate(xs):
        for b, y in enumerate(ys):
            arr[a, b] = np.prod([mu.probs[xi[xc], yi[yc]] for xc, yc in zip(x, y)])
    return JointDist(mu.axes, (xs, ys), arr / arr.sum())


def tensor_partition(pm: PartitionedInput, m: int) -> PartitionedInput:
    ds = tuple(itertools.product(pm.kappa.alphabet, repeat=m))
    kappa = FiniteDist.normalized(ds, [np.prod([pm.kappa[d] for d in dd]) for dd in ds])
    comps = {}
    for dd in ds:
        # product of products is a product
        xr, yr = pm.mu.ranges
        xs = tuple(itertools.product(xr, repeat=m))
        ys = tuple(itertools.product(yr, repeat=m))
        px = [pm.components[d].probs.sum(axis=1) for d in dd]
        py = [pm.components[d].probs.sum(axis=0) for d in dd]
        ax = np.array([np.prod([px[c][xr.index(x[c])] for c in range(m)]) for x in xs])
        ay = np.array([np.prod([py[c][yr.index(y[c])] for c in range(m)]) for y in ys])
        comps[dd] = JointDist(pm.mu.axes, (xs, ys), np.outer(ax, ay))
    return PartitionedInput.from_components(kappa, comps)


def tensor_protocol(proto: ProtocolTree, m: int, max_transcripts: int = MAX_TRANSCRIPTS):
    """m independent copies run side by side, one merged round per original round.

    Round i's message is the tuple of the m copies' round-i messages, so the
    result is still a k-round protocol, for f^m.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if m == 1:
        return proto
    size = math.prod(len(r.alphabet) for r in proto.rounds) ** m
    if size > max_transcripts or (len(proto.x_range) * len(proto.y_range)) ** m > max_transcripts:
        raise ResourceGuard(f"tensor power {m} exceeds the state-space guard")
    rounds = tuple(Round(r.owner, tuple(itertools.product(r.alphabet, repeat=m)))
                   for r in proto.rounds)

    @lru_cache(maxsize=None)
    def policy(i, inp, prefix):
        laws = [proto.message_law(i, inp[c], tuple(msg[c] for msg in prefix))
                for c in range(m)]
        probs = np.ones(())
        for law in laws:
            probs = np.multiply.outer(probs, law.probs)
        return FiniteDist(rounds[i].alphabet, probs.reshape(-1))

    def output(t):
        return tuple(proto.answer(tuple(msg[c] for msg in t)) for c in range(m))

    return ProtocolTree(tuple(itertools.product(proto.x_range, repeat=m)),
                        tuple(itertools.product(proto.y_range, repeat=m)),
                        rounds, policy, output)


# Exhaustive distributional complexity for tiny instances.

def _set_partitions(items: tuple, max_blocks: int):
    if not items:
        yield ()
        return
    head, rest = items[0], items[1:]
    for part in _set_partitions(rest, max_blocks):
        for i in range(len(part)):
            yield part[:i] + (part[i] | {head},) + part[i + 1:]
        if len(part) < max_blocks:
            yield part + (frozenset([head]),)


def brute_force_C(f: FunctionSpec, mu: JointDist, delta: float, k: int,
                  bits_per_round: int, first: str = ALICE) -> int:
    """Least worst-case bits of a deterministic k-round protocol with
    distributional error <= delta under mu.

    Rounds alternate starting with ``first``; in each round the speaker sends
    0..bits_per_round bits (chosen per node). Raises ValueError if no such
    protocol reaches delta, ResourceGuard for instances beyond the guard.
    """
    if len(f.x_range) > 4 or len(f.y_range) > 4 or k > 2 or bits_per_round > 2:
        raise ResourceGuard("brute_force_C is limited to |X|,|Y| <= 4, k <= 2, 2 bits/round")
    if mu.ranges != (f.x_range, f.y_range):
        raise ProtocolError("mu ranges differ from f's")
    nx, ny = len(f.x_range), len(f.y_range)
    wrong = np.array([[[z not in f.table[(x, y)] for z in f.z_range]
                       for y in f.y_range] for x in f.x_range], dtype=float)
    weighted = mu.probs[:, :, None] * wrong
    owners = [first if i % 2 == 0 else (BOB if first == ALICE else ALICE) for i in range(k)]

    @lru_cache(maxsize=None)
    def best(i: int, A: frozenset, B: frozenset, budget: int) -> float:
        a, b = sorted(A), sorted(B)
        leaf = weighted[np.ix_(a, b)].sum(axis=(0, 1)).min() if a and b else 0.0
        if i == k or budget == 0 or leaf == 0.0:
            return float(leaf)
        val = best(i + 1, A, B, budget)
        side = A if owners[i] == ALICE else B
        for nbits in range(1, min(bits_per_round, budget) + 1):
            for part in _set_partitions(tuple(sorted(side)), 2 ** nbits):
                if len(part) < 2:
                    continue
                if owners[i] == ALICE:
                    tot = sum(best(i + 1, blk, B, budget - nbits) for blk in part)
                else:
                    tot = sum(best(i + 1, A, blk, budget - nbits) for blk in part)
                val = min(val, tot)
        return float(val)

    A0, B0 = frozenset(range(nx)), frozenset(range(ny))
    for c in range(k * bits_per_round + 1):
        if best(0, A0, B0, c) <= delta + 1e-12:
            return c
    raise ValueError(f"no {k}-round protocol with <= {bits_per_round} bits/round "
                     f"reaches error {delta}")
