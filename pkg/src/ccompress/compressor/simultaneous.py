"""Compression of simultaneous-message protocols.

One shared sample sigma of messages drawn from the average message law Q is
thinned, per input, by rejection sampling into a subsequence sigma_x that
behaves like the input's own message law on every referee predicate. The
speaker then sends a uniformly random position of sigma_x, which costs only
log |sigma| bits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import BudgetExhausted, InfiniteDivergence, ProtocolError, ResourceGuard
from ..probability import FiniteDist, JointDist, mutual_information, relative_entropy
from ..protocol import FunctionSpec, SimulProtocol
from ..rng import stream
from ..sampler import rejection_pair
from ..substate import decompose

MAX_DRAWS = 1 << 25
CHUNK = 1 << 20


@dataclass(frozen=True, eq=False)
class SupportSample:
    """A stream of t draws from Q (kept implicit) and N accepted subsequences.

    ``positions[i]`` are 0-based stream positions of subsequence i and
    ``symbols[i]`` the corresponding alphabet indices. ``deviation[i, j]`` is
    |mean of s[i, j] over subsequence i - p[i, j]|.
    """

    seed: int
    attempt: int
    t: int
    t_i: tuple
    positions: tuple
    symbols: tuple
    first_symbol: int
    deviation: np.ndarray = field(repr=False)
    eps: float

    def x_seq(self, q: FiniteDist) -> list:
        """Regenerate the full stream (only sensible for small t)."""
        rng = stream(self.seed, self.attempt)
        out = []
        done = 0
        while done < self.t:
            n = min(CHUNK, self.t - done)
            out.extend(rng.choice(len(q), size=n, p=q.probs).tolist())
            rng.random(n)
            done += n
        return [q.alphabet[i] for i in out]

    @property
    def ok(self) -> bool:
        return bool(np.all(self.deviation <= 2 * self.eps + 1e-12)) and \
            all(len(p) > 0 for p in self.positions)


def support_sample_lengths(a: Sequence[float], N: int, eps: float) -> list[int]:
    """t_i = ceil(8 2^((a_i+1)/eps) log2(2N) / ((1-eps) eps^2))."""
    return [math.ceil(8 * 2 ** ((ai + 1) / eps) * math.log2(2 * N) / ((1 - eps) * eps ** 2))
            for ai in a]


def sample_support(Q: FiniteDist, Ps: Sequence[FiniteDist], s: np.ndarray, eps: float,
                   seed: int, max_retries: int = 16, max_draws: int = MAX_DRAWS) -> SupportSample:
    """Find one Q-sample whose rejection-thinned subsequences track every P_i.

    ``s`` has shape (N, J, |alphabet|) with entries in [0, 1]. Each attempt
    draws a fresh stream from ``stream(seed, attempt)``; the first attempt
    meeting the deviation bound 2*eps on every (i, j) is returned.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    N = len(Ps)
    s = np.asarray(s, dtype=float)
    if s.ndim != 3 or s.shape[0] != N or s.shape[2] != len(Q):
        raise ValueError(f"predicate array has shape {s.shape}, expected (N, J, {len(Q)})")
    a = [relative_entropy(P, Q) for P in Ps]
    if any(math.isinf(ai) for ai in a):
        raise InfiniteDivergence("every P_i must have finite divergence from Q")
    t_i = support_sample_lengths(a, N, eps)
    t = max(t_i)
    if t > max_draws:
        raise ResourceGuard(f"sample length {t} exceeds the guard {max_draws}")
    accept = np.empty((N, len(Q)))
    for i, (P, ai) in enumerate(zip(Ps, a)):
        p_tilde = decompose(P, Q, 1.0 / eps).p_tilde
        exponent = (ai + 1) / eps - math.log2(1 - eps)
        accept[i] = rejection_pair(p_tilde, Q, exponent).accept_prob
    p = np.einsum("ik,ijk->ij", np.array([P.probs for P in Ps]), s)
    best = None
    for attempt in range(max_retries):
        rng = stream(seed, attempt)
        pos = [[] for _ in range(N)]
        sym = [[] for _ in range(N)]
        first = None
        done = 0
        while done < t:
            n = min(CHUNK, t - done)
            xs = rng.choice(len(Q), size=n, p=Q.probs)
            u = rng.random(n)
            if first is None:
                first = int(xs[0])
            for i in range(N):
                upto = min(n, t_i[i] - done)
                if upto <= 0:
                    continue
                hit = np.flatnonzero(u[:upto] < accept[i, xs[:upto]])
                pos[i].append(hit + done)
                sym[i].append(xs[hit])
            done += n
        positions = tuple(np.concatenate(pp) if pp else np.zeros(0, int) for pp in pos)
        symbols = tuple(np.concatenate(ss) if ss else np.zeros(0, int) for ss in sym)
        dev = np.full(p.shape, np.inf)
        for i in range(N):
            if len(symbols[i]):
                counts = np.bincount(symbols[i], minlength=len(Q)) / len(symbols[i])
                dev[i] = np.abs(s[i] @ counts - p[i])
        sample = SupportSample(seed, attempt, t, tuple(t_i), positions, symbols, first, dev, eps)
        if sample.ok:
            return sample
        if best is None or np.max(dev) < np.max(best.deviation):
            best = sample
    raise BudgetExhausted(f"no sample met the 2*eps deviation bound in {max_retries} attempts",
                          best=best)


@dataclass(frozen=True, eq=False)
class SimulCompressionReport:
    new_protocol: SimulProtocol
    good_A: frozenset
    good_B: frozenset
    alice_bits: int
    bob_bits: int
    error_on_good: float
    a: float
    b: float
    delta: float
    eps: float
    alice_bound: float
    bob_bound: float
    t_A: int
    t_B: int
    seed: int
    per_input_error: np.ndarray = field(repr=False)
    original_error: np.ndarray = field(repr=False)

    def violations(self) -> list[str]:
        p = self.new_protocol
        out = []
        if 3 * len(self.good_A) < 2 * len(p.x_range):
            out.append("|good_A| >= 2/3 |X|")
        if 3 * len(self.good_B) < 2 * len(p.y_range):
            out.append("|good_B| >= 2/3 |Y|")
        if self.alice_bits > self.alice_bound:
            out.append("alice bit bound")
        if self.bob_bits > self.bob_bound:
            out.append("bob bit bound")
        if self.error_on_good > self.delta + 4 * self.eps + 1e-9:
            out.append("error on good inputs <= delta + 4 eps")
        return out

    def to_json(self) -> dict:
        return {"mode": "simul", "alice_bits": self.alice_bits, "bob_bits": self.bob_bits,
                "alice_bound": self.alice_bound, "bob_bound": self.bob_bound,
                "a": self.a, "b": self.b, "delta": self.delta, "eps": self.eps,
                "error_on_good": self.error_on_good,
                "good_A": [x for x in self.new_protocol.x_range if x in self.good_A],
                "good_B": [y for y in self.new_protocol.y_range if y in self.good_B],
                "t_A": self.t_A, "t_B": self.t_B, "seed": self.seed,
                "violations": self.violations()}


def message_bit_bound(a: float, n: int, eps: float) -> float:
    """(3a+1)/eps + log2(n+1) + log2(1/(eps^2 (1-eps))) + 4."""
    return (3 * a + 1) / eps + math.log2(n + 1) + math.log2(1 / (eps ** 2 * (1 - eps))) + 4


def _index_bits(t: int) -> int:
    return math.ceil(math.log2(t)) if t > 1 else 0


def _compress_side(laws: np.ndarray, success: np.ndarray, msgs: tuple, eps: float,
                   seed: int, max_retries: int, max_draws: int):
    """Compress one speaker.

    ``laws[u]`` is the message law for speaker input u and ``success[u, v, m]``
    the probability of a correct answer when message m is sent and the other
    party holds v. Returns (good inputs, new law rows, new message labels,
    map label -> original message index, info, sample).
    """
    nin = laws.shape[0]
    mu_in = np.full(nin, 1.0 / nin)
    Q = FiniteDist.normalized(msgs, mu_in @ laws)
    rows = [FiniteDist(msgs, r) for r in laws]
    info = mutual_information(JointDist(("in", "m"), (tuple(range(nin)), msgs),
                                        mu_in[:, None] * laws), "in", "m")
    div = np.array([relative_entropy(r, Q) for r in rows])
    good = [u for u in range(nin) if div[u] <= 3 * info + 1e-12]
    sample = sample_support(Q, [rows[u] for u in good], success[good], eps, seed,
                            max_retries=max_retries, max_draws=max_draws)
    used = sorted({0} | {int(p) for pp in sample.positions for p in pp})
    label = {p: c for c, p in enumerate(used)}
    to_msg = {0: sample.first_symbol}
    for pp, ss in zip(sample.positions, sample.symbols):
        to_msg.update(zip(pp.tolist(), ss.tolist()))
    new = np.zeros((nin, len(used)))
    new[:, label[0]] = 1.0
    for u, pp in zip(good, sample.positions):
        new[u] = 0.0
        np.add.at(new[u], [label[int(p)] for p in pp], 1.0 / len(pp))
        new[u] /= new[u].sum()
    return frozenset(good), new, tuple(used), [to_msg[p] for p in used], info, sample


def compress_simultaneous(proto: SimulProtocol, f: FunctionSpec, eps: float, seed: int,
                          mu=None, max_retries: int = 16,
                          max_draws: int = MAX_DRAWS) -> SimulCompressionReport:
    """Compress Alice's message, then Bob's, under uniformly distributed inputs.

    New messages are positions in the shared sample (labelled by stream
    position); each side costs ceil(log2 t) bits for a sample of length t.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if mu is not None:
        if not np.allclose(mu.probs, 1.0 / mu.probs.size, rtol=0, atol=1e-12):
            raise ProtocolError("simultaneous compression assumes uniform inputs")
    orig_err = proto.error_table(f)
    delta = float(orig_err.max())
    c = proto.correct_table(f).astype(float)  # [x, y, a, b]

    succ_a = np.einsum("yb,xyab->xya", proto.bob, c)
    good_A, alice_new, a_lab, a_map, a_info, sample_a = _compress_side(
        proto.alice, succ_a, proto.a_msgs, eps, _sub(seed, 0), max_retries, max_draws)
    ref_mid = proto.referee[a_map, :]
    mid = SimulProtocol(proto.x_range, proto.y_range, a_lab, proto.b_msgs,
                        alice_new, proto.bob, ref_mid)

    c_mid = mid.correct_table(f).astype(float)
    succ_b = np.einsum("xa,xyab->yxb", mid.alice, c_mid)
    good_B, bob_new, b_lab, b_map, b_info, sample_b = _compress_side(
        proto.bob, succ_b, proto.b_msgs, eps, _sub(seed, 1), max_retries, max_draws)
    ref_new = ref_mid[:, b_map]
    new = SimulProtocol(proto.x_range, proto.y_range, a_lab, b_lab, alice_new, bob_new, ref_new)

    err = new.error_table(f)
    ga = [proto.x_range[u] for u in sorted(good_A)]
    gb = [proto.y_range[v] for v in sorted(good_B)]
    on_good = err[np.ix_(sorted(good_A), sorted(good_B))]
    n_a = math.ceil(math.log2(len(proto.x_range))) if len(proto.x_range) > 1 else 0
    n_b = math.ceil(math.log2(len(proto.y_range))) if len(proto.y_range) > 1 else 0
    return SimulCompressionReport(
        new_protocol=new, good_A=frozenset(ga), good_B=frozenset(gb),
        alice_bits=_index_bits(sample_a.t), bob_bits=_index_bits(sample_b.t),
        error_on_good=float(on_good.max()) if on_good.size else 0.0,
        a=a_info, b=b_info, delta=delta, eps=eps,
        alice_bound=message_bit_bound(a_info, n_a, eps),
        bob_bound=message_bit_bound(b_info, n_b, eps),
        t_A=sample_a.t, t_B=sample_b.t, seed=seed,
        per_input_error=err, original_error=orig_err)


def _sub(seed: int, side: int) -> int:
    return int(np.random.SeedSequence(int(seed), spawn_key=(7, side)).generate_state(1)[0])
