"""Seeded random instances for experiments and tests."""
from __future__ import annotations

import itertools

import numpy as np

from .probability import FiniteDist, JointDist
from .protocol import (ALICE, BOB, FunctionSpec, ProtocolTree, Round, SimulProtocol,
                       transcript_distribution)
from .rng import stream


def _binary_function(xs, ys, fn) -> FunctionSpec:
    return FunctionSpec(xs, ys, (0, 1), {(x, y): frozenset([fn(x, y)]) for x in xs for y in ys})


def random_dist(rng: np.random.Generator, alphabet, sparsity: float = 0.0,
                concentration: float = 1.0) -> FiniteDist:
    """Dirichlet draw; each symbol is zeroed with prob ``sparsity`` (one always kept)."""
    alphabet = tuple(alphabet)
    w = rng.dirichlet(np.full(len(alphabet), concentration))
    if sparsity > 0:
        keep = rng.random(len(alphabet)) >= sparsity
        keep[rng.integers(len(alphabet))] = True
        w = np.where(keep, w, 0.0)
    return FiniteDist.normalized(alphabet, w)


def noisy_rows(rng: np.random.Generator, n_rows: int, n_cols: int, noise: float) -> np.ndarray:
    """Rows mixing a point mass with the uniform law: input-revealing but not fully."""
    rows = np.full((n_rows, n_cols), noise / n_cols)
    rows[np.arange(n_rows), rng.integers(n_cols, size=n_rows)] += 1.0 - noise
    return rows


def random_simul_protocol(seed: int, n_x: int, n_y: int, n_msgs: int, noise: float = 0.5):
    """(protocol, f) where f is the referee's majority answer per input pair."""
    rng = stream(seed, 11)
    xs, ys = tuple(range(n_x)), tuple(range(n_y))
    a_msgs = tuple(f"a{i}" for i in range(n_msgs))
    b_msgs = tuple(f"b{i}" for i in range(n_msgs))
    alice = noisy_rows(rng, n_x, n_msgs, noise)
    bob = noisy_rows(rng, n_y, n_msgs, noise)
    referee = rng.integers(2, size=(n_msgs, n_msgs))
    proto = SimulProtocol(xs, ys, a_msgs, b_msgs, alice, bob, referee.tolist())
    p_one = np.einsum("xa,yb,ab->xy", alice, bob, referee.astype(float))
    return proto, _binary_function(xs, ys, lambda x, y: int(p_one[x, y] >= 0.5))


def random_tree_protocol(seed: int, n_x: int, n_y: int, k: int, n_msgs: int,
                         noise: float = 0.6, first: str = ALICE):
    """(protocol, f): random alternating k-round protocol; f is its likeliest answer."""
    rng = stream(seed, 12)
    xs, ys = tuple(range(n_x)), tuple(range(n_y))
    owners = [first if i % 2 == 0 else (BOB if first == ALICE else ALICE) for i in range(k)]
    rounds = tuple(Round(o, tuple(f"m{i}{s}" for s in range(n_msgs)))
                   for i, o in enumerate(owners))
    policy = {}
    for i, r in enumerate(rounds):
        inputs = xs if r.owner == ALICE else ys
        for prefix in itertools.product(*(rr.alphabet for rr in rounds[:i])):
            rows = noisy_rows(rng, len(inputs), n_msgs, noise)
            for u, inp in enumerate(inputs):
                policy[(i, inp, prefix)] = FiniteDist(r.alphabet, rows[u])
    output = {t: int(rng.integers(2))
              for t in itertools.product(*(r.alphabet for r in rounds))}
    proto = ProtocolTree(xs, ys, rounds, policy, output)
    best = {}
    for x in xs:
        for y in ys:
            d = transcript_distribution(proto, x, y)
            p1 = sum(p for t, p in zip(d.alphabet, d.probs) if output[t] == 1)
            best[(x, y)] = int(p1 >= 0.5)
    return proto, _binary_function(xs, ys, lambda x, y: best[(x, y)])


def uniform_inputs(x_range, y_range) -> JointDist:
    return JointDist.product(("x", FiniteDist.uniform(x_range)), ("y", FiniteDist.uniform(y_range)))
