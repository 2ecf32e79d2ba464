"""Round-by-round compression of a k-round private-coin protocol.

Round i (processed from the last round back to the first) is replaced by a
Las-Vegas sampler run against a public stream of draws from the message law
conditioned only on the visible prefix. The speaker transmits the stopping
index with a prefix-free code, or the one-bit dummy on abort, which ends the
protocol. Averaged over the public coins every quantity (transcript law,
error, expected length) has a closed form, computed by
:class:`PublicCoinProtocol`. A concrete protocol is obtained by fixing the
coins: each candidate coin turns every run into a deterministic sequence of
codewords, truncated at a Markov cap, and the best candidate is kept.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ..errors import BudgetExhausted, InfiniteDivergence, ProtocolError, ResourceGuard
from ..probability import FiniteDist, JointDist, relative_entropy
from ..protocol import (ALICE, FunctionSpec, ProtocolTree, Round, evaluate_error,
                        information_cost)
from ..rng import stream
from ..sampler import ABORT, LasVegasSampler, las_vegas_sampler
from .coding import DUMMY, encode_index, expected_index_bits, index_length_law

NOTHING = ""  # sent in every round after an abort
EXPLICIT_LIMIT = 1 << 24


def prefix_laws(proto: ProtocolTree) -> list[dict]:
    """``levels[i][m1]`` = array[x, y] of Pr[first i messages = m1 | x, y]."""
    nx, ny = len(proto.x_range), len(proto.y_range)
    levels = [{(): np.ones((nx, ny))}]
    for i in range(proto.k):
        nxt = {}
        owner = proto.rounds[i].owner
        for m1, pr in levels[-1].items():
            inputs = proto.x_range if owner == ALICE else proto.y_range
            rows = np.zeros((len(inputs), len(proto.rounds[i].alphabet)))
            for u, inp in enumerate(inputs):
                reach = pr[u].any() if owner == ALICE else pr[:, u].any()
                if reach:
                    rows[u] = proto.message_law(i, inp, m1).probs
            for s_idx, s in enumerate(proto.rounds[i].alphabet):
                col = rows[:, s_idx]
                new = pr * (col[:, None] if owner == ALICE else col[None, :])
                if new.any():
                    nxt[m1 + (s,)] = new
        levels.append(nxt)
    return levels


@dataclass(frozen=True, eq=False)
class RoundCompressionState:
    """Everything needed to compress round ``stage`` (0-based).

    ``references[m1]`` is the message law given only the prefix m1 (the law
    of the public stream for that prefix); ``samplers[(m1, u)]`` is the
    speaker's sampler, or None where the speaker cannot be simulated (zero
    weight, or infinite divergence), which always aborts.
    """

    stage: int
    owner: str
    k: int
    eps: float
    seed: int
    references: dict = field(repr=False)
    samplers: dict = field(repr=False)
    weights: dict = field(repr=False)
    divergences: dict = field(repr=False)
    prefix_rank: dict = field(repr=False)
    a_i: float

    @cached_property
    def by_prefix(self) -> dict:
        out = {}
        for (m1, u), smp in self.samplers.items():
            out.setdefault(m1, {})[u] = smp
        return out

    def coin_stream(self, coin: int, m1: tuple):
        """Generator for the public stream of prefix m1 under candidate ``coin``."""
        return stream(self.seed, 2, coin, self.stage, self.prefix_rank[m1])

    def gamma_prefix(self, coin: int, m1: tuple, n: int) -> list:
        """First n entries of the explicit stream for m1 (i.i.d. from references[m1])."""
        q = self.references[m1]
        rng = self.coin_stream(coin, m1)
        return [q.alphabet[i] for i in rng.choice(len(q), size=n, p=q.probs)]


def round_state(proto: ProtocolTree, mu: JointDist, i: int, eps: float, seed: int,
                levels: list | None = None) -> RoundCompressionState:
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    if mu.ranges != (proto.x_range, proto.y_range):
        raise ProtocolError("input distribution ranges differ from the protocol's")
    levels = levels or prefix_laws(proto)
    owner = proto.rounds[i].owner
    inputs = proto.x_range if owner == ALICE else proto.y_range
    alphabet = proto.rounds[i].alphabet
    refs, samplers, weights, divs = {}, {}, {}, {}
    a_i = 0.0
    ranked = sorted(levels[i], key=repr)
    for m1 in ranked:
        pr = levels[i][m1]
        joint = mu.probs * pr
        w_in = joint.sum(axis=1) if owner == ALICE else joint.sum(axis=0)
        total = w_in.sum()
        laws = {}
        for u, inp in enumerate(inputs):
            reach = pr[u].any() if owner == ALICE else pr[:, u].any()
            if reach:
                laws[u] = proto.message_law(i, inp, m1)
        if total > 0:
            mix = sum(w_in[u] * laws[u].probs for u in laws if w_in[u] > 0) / total
            ref = FiniteDist.normalized(alphabet, mix)
            refs[m1] = ref
        else:
            ref = None
        for u, law in laws.items():
            weights[(m1, u)] = float(w_in[u])
            if ref is None:
                samplers[(m1, u)] = None
                continue
            s = relative_entropy(law, ref)
            divs[(m1, u)] = s
            if math.isinf(s):
                samplers[(m1, u)] = None
                continue
            samplers[(m1, u)] = las_vegas_sampler(law, ref, eps / proto.k)
            a_i += w_in[u] * s
    return RoundCompressionState(i, owner, proto.k, eps, seed, refs, samplers, weights, divs,
                                 {m1: r for r, m1 in enumerate(ranked)}, float(a_i))


# Coins averaged out.

@dataclass(frozen=True, eq=False)
class PublicCoinProtocol:
    """The base protocol with some rounds replaced by Las-Vegas index rounds.

    ``states`` maps a compressed round index to its RoundCompressionState;
    other rounds run the base protocol's private-coin policy and cost
    ceil(log2 |alphabet|) bits.
    """

    base: ProtocolTree
    states: dict
    t_max: int | None = None

    @property
    def compressed(self) -> frozenset:
        return frozenset(self.states)

    def sampler(self, i: int, m1: tuple, u: int) -> LasVegasSampler | None:
        return self.states[i].samplers.get((m1, u))

    def _cap(self, smp: LasVegasSampler) -> int:
        return smp.default_cap() if self.t_max is None else int(self.t_max)

    def outcomes(self, i: int, u: int, m1: tuple) -> list:
        """[(symbol or ABORT, [(bits, prob), ...]), ...] for round i at prefix m1."""
        inputs = self.base.x_range if self.base.rounds[i].owner == ALICE else self.base.y_range
        if i not in self.states:
            law = self.base.message_law(i, inputs[u], m1)
            bits = self.base.rounds[i].bits
            return [(s, [(bits, float(p))]) for s, p in zip(law.alphabet, law.probs) if p > 0]
        smp = self.sampler(i, m1, u)
        if smp is None:
            return [(ABORT, [(1, 1.0)])]
        cap = self._cap(smp)
        blocks = index_length_law(2.0 ** (-smp.a), cap)
        keep = sum(m for _, m in blocks)
        out = []
        for s, p in zip(smp.p.alphabet, smp.p_prime):
            if p > 0:
                out.append((s, [(n, float(p) * m) for n, m in blocks]))
        out.append((ABORT, [(1, smp.eps * keep + (1.0 - keep))]))
        return out

    def _inputs_index(self, x, y):
        return self.base.x_range.index(x), self.base.y_range.index(y)

    def transcript_law(self, x, y, cap: int | None = None) -> tuple[dict, float]:
        """({decoded base transcript: prob}, abort prob) averaged over the coins.

        With ``cap`` the bit count so far is tracked as a vector and any run
        that would exceed ``cap`` bits aborts instead.
        """
        xi, yi = self._inputs_index(x, y)
        states = {(): 1.0 if cap is None else np.eye(1, cap + 1)[0]}
        abort = 0.0
        for i in range(self.base.k):
            u = xi if self.base.rounds[i].owner == ALICE else yi
            nxt = {}
            for m1, p in states.items():
                for s, lens in self.outcomes(i, u, m1):
                    if cap is None:
                        mass = p * sum(m for _, m in lens)
                        kept = mass
                    else:
                        law = np.zeros(max(n for n, _ in lens) + 1)
                        for n, m in lens:
                            law[n] += m
                        full = np.convolve(p, law)
                        kept = full[: cap + 1]
                        mass = float(full.sum())
                    if s is ABORT:
                        abort += mass
                        continue
                    if cap is not None:
                        abort += mass - float(kept.sum())
                    key = m1 + (s,)
                    nxt[key] = nxt[key] + kept if key in nxt else kept
            states = nxt
        law = {t: float(p if cap is None else p.sum()) for t, p in states.items()}
        return law, float(abort)

    def error_table(self, f: FunctionSpec, cap: int | None = None) -> np.ndarray:
        out = np.zeros((len(self.base.x_range), len(self.base.y_range)))
        for xi, x in enumerate(self.base.x_range):
            for yi, y in enumerate(self.base.y_range):
                law, err = self.transcript_law(x, y, cap)
                for t, p in law.items():
                    if self.base.answer(t) not in f.table[(x, y)]:
                        err += p
                out[xi, yi] = err
        return np.clip(out, 0.0, 1.0)

    def expected_error(self, f: FunctionSpec, mu: JointDist, cap: int | None = None) -> float:
        return float((mu.probs * self.error_table(f, cap)).sum())

    def round_bits(self, i: int, u: int, m1: tuple) -> float:
        if i not in self.states:
            return float(self.base.rounds[i].bits)
        smp = self.sampler(i, m1, u)
        if smp is None:
            return 1.0
        return expected_index_bits(2.0 ** (-smp.a), 1.0 - smp.eps, self._cap(smp))

    def abort_prob(self, i: int, u: int, m1: tuple) -> float:
        if i not in self.states:
            return 0.0
        smp = self.sampler(i, m1, u)
        if smp is None:
            return 1.0
        return smp.output_law(self._cap(smp))[ABORT]

    def round_profile(self, x, y) -> list[tuple[float, float]]:
        """Per round: (expected bits, probability of aborting in that round)."""
        xi, yi = self._inputs_index(x, y)
        live = {(): 1.0}
        out = []
        for i in range(self.base.k):
            u = xi if self.base.rounds[i].owner == ALICE else yi
            bits = ab = 0.0
            nxt = {}
            for m1, p in live.items():
                bits += p * self.round_bits(i, u, m1)
                for s, lens in self.outcomes(i, u, m1):
                    q = sum(m for _, m in lens)
                    if s is ABORT:
                        ab += p * q
                    else:
                        nxt[m1 + (s,)] = nxt.get(m1 + (s,), 0.0) + p * q
            out.append((bits, ab))
            live = nxt
        return out

    def expected_bits(self, mu: JointDist, rounds=None) -> float:
        total = 0.0
        for xi, x in enumerate(self.base.x_range):
            for yi, y in enumerate(self.base.y_range):
                w = mu.probs[xi, yi]
                if w > 0:
                    prof = self.round_profile(x, y)
                    idx = range(len(prof)) if rounds is None else rounds
                    total += w * sum(prof[i][0] for i in idx)
        return float(total)


def compress_round(state: RoundCompressionState, proto_next: PublicCoinProtocol, i: int,
                   eps: float) -> PublicCoinProtocol:
    """Replace round i of ``proto_next`` by index transmission; later rounds are untouched."""
    if state.stage != i:
        raise ProtocolError(f"state is for round {state.stage + 1}, not {i + 1}")
    if i in proto_next.states:
        raise ProtocolError(f"round {i + 1} is already compressed")
    if any(j < i for j in proto_next.states):
        raise ProtocolError("rounds must be compressed from the last one backwards")
    if not math.isclose(state.eps, eps):
        raise ProtocolError("state was built for a different eps")
    return PublicCoinProtocol(proto_next.base, {**proto_next.states, i: state}, proto_next.t_max)


# Coins fixed.

def _realize_skip(smps: dict, q: FiniteDist, rng, caps: dict) -> dict:
    """Stopping index and outcome of every input against one shared stream.

    Simulates the stream only at positions where some live input stops: the
    gap to the next such position is geometric, and the draw there is
    conditioned on stopping someone.
    """
    res = {}
    live = {}
    for u, smp in smps.items():
        if smp is None:
            res[u] = (None, ABORT)
        else:
            live[u] = smp
    pos = 0
    while live:
        stop = np.max([s.stop_given_x for s in live.values()], axis=0)
        weight = q.probs * stop
        p_any = float(weight.sum())
        if p_any >= 1.0:
            gap = 1
        else:
            gap = int(math.floor(math.log1p(-rng.random()) / math.log1p(-p_any))) + 1
        pos += gap
        for u in [u for u in live if caps[u] < pos]:
            res[u] = (None, ABORT)
            del live[u]
        if not live:
            break
        sym = int(rng.choice(len(q), p=weight / p_any))
        v = rng.random() * stop[sym]
        for u in list(live):
            smp = live[u]
            if v < smp.stop_given_x[sym]:
                res[u] = (pos, q.alphabet[sym] if v < smp.gamma[sym] else ABORT)
                del live[u]
    return res


def _realize_explicit(smps: dict, q: FiniteDist, rng, caps: dict) -> dict:
    """Same law as _realize_skip, but reads the stream position by position."""
    res = {u: (None, ABORT) for u, s in smps.items() if s is None}
    live = {u: s for u, s in smps.items() if s is not None}
    pos, chunk = 0, 256
    limit = max(caps[u] for u in live) if live else 0
    if limit > EXPLICIT_LIMIT and any(2.0 ** s.a > EXPLICIT_LIMIT / 64 for s in live.values()):
        raise ResourceGuard("explicit stream too long; use the skip mode")
    while live:
        xs = rng.choice(len(q), size=chunk, p=q.probs)
        v = rng.random(chunk)
        for u in list(live):
            smp = live[u]
            hit = np.flatnonzero(v < smp.stop_given_x[xs])
            if hit.size and pos + int(hit[0]) + 1 <= caps[u]:
                j = int(hit[0])
                sym = xs[j]
                res[u] = (pos + j + 1, q.alphabet[sym] if v[j] < smp.gamma[sym] else ABORT)
                del live[u]
            elif pos + chunk >= caps[u]:
                res[u] = (None, ABORT)
                del live[u]
        pos += chunk
        chunk = min(chunk * 2, 1 << 20)
    return res


@dataclass(frozen=True)
class CoinRun:
    coin: int
    error: float
    cost: int
    transcripts: dict = field(repr=False, compare=False)  # (x, y) -> (codewords, decoded or ABORT)


class _CoinRealization:
    def __init__(self, pcp: PublicCoinProtocol, coin: int, mode: str):
        self.pcp, self.coin, self.mode = pcp, coin, mode
        self.cache = {}

    def lookup(self, i: int, m1: tuple, u: int):
        key = (i, m1)
        if key not in self.cache:
            st = self.pcp.states[i]
            smps = st.by_prefix.get(m1, {})
            if m1 not in st.references:
                self.cache[key] = {uu: (None, ABORT) for uu in smps}
            else:
                caps = {uu: (self.pcp._cap(s) if s is not None else 0) for uu, s in smps.items()}
                rng = st.coin_stream(self.coin, m1)
                fn = _realize_skip if self.mode == "skip" else _realize_explicit
                self.cache[key] = fn(smps, st.references[m1], rng, caps)
        return self.cache[key].get(u, (None, ABORT))


def run_coin(pcp: PublicCoinProtocol, f: FunctionSpec, mu: JointDist, coin: int, cap: int,
             mode: str = "skip") -> CoinRun:
    """Run every input pair with the public coins fixed to candidate ``coin``."""
    base = pcp.base
    real = _CoinRealization(pcp, coin, mode)
    out, err, cost = {}, 0.0, 0
    for xi, x in enumerate(base.x_range):
        for yi, y in enumerate(base.y_range):
            words, decoded, bits, aborted = [], (), 0, False
            for i in range(base.k):
                u = xi if base.rounds[i].owner == ALICE else yi
                if aborted:
                    words.append(NOTHING)
                    continue
                j, sym = real.lookup(i, decoded, u)
                word = DUMMY if sym is ABORT else encode_index(j)
                if bits + len(word) > cap:
                    word = DUMMY if bits + 1 <= cap else NOTHING
                    aborted = True
                elif sym is ABORT:
                    aborted = True
                else:
                    decoded += (sym,)
                words.append(word)
                bits += len(word)
            result = ABORT if aborted else decoded
            wrong = aborted or base.answer(decoded) not in f.table[(x, y)]
            err += mu.probs[xi, yi] * wrong
            cost = max(cost, bits)
            out[(x, y)] = (tuple(words), result)
    return CoinRun(coin, float(err), cost, out)


def deterministic_protocol(base: ProtocolTree, run: CoinRun) -> ProtocolTree:
    """Table-backed deterministic tree whose messages are the codewords of ``run``.

    Aborted runs answer None, which no function accepts.
    """
    k = base.k
    alphabets = [set() for _ in range(k)]
    policy_words, output = {}, {}
    for (x, y), (words, result) in run.transcripts.items():
        for i, w in enumerate(words):
            alphabets[i].add(w)
            inp = x if base.rounds[i].owner == ALICE else y
            key = (i, inp, words[:i])
            if policy_words.setdefault(key, w) != w:
                raise ProtocolError("coin realization is not a function of the speaker's view")
        output[words] = None if result is ABORT else base.answer(result)
    rounds = tuple(Round(r.owner, tuple(sorted(a, key=lambda w: (len(w), w))))
                   for r, a in zip(base.rounds, alphabets))
    policy = {key: FiniteDist.point(rounds[key[0]].alphabet, w)
              for key, w in policy_words.items()}
    return ProtocolTree(base.x_range, base.y_range, rounds, policy, output)


def markov_cap(k: int, a: float, eps: float) -> int:
    """floor(2k(a+1)/eps^2 + 2k/eps)."""
    return int(math.floor(2 * k * (a + 1) / eps ** 2 + 2 * k / eps + 1e-9))


@dataclass(frozen=True, eq=False)
class MultiCompressionReport:
    final_protocol: ProtocolTree
    comm_bits: int
    dist_error: float
    per_round: list
    coin_choice: dict
    seed: int
    k: int
    eps: float
    delta: float
    information: float
    chain_rule_sum: float
    cap: int
    pass_errors: list
    averaged_error: float
    truncated_error: float
    expected_bits: float
    monotone_ok: bool
    length_bound_ok: bool

    @property
    def per_round_expected_bits(self) -> list:
        return [r["expected_bits"] for r in self.per_round]

    @property
    def bit_bound(self) -> float:
        return 2 * self.k * (self.information + 1) / self.eps ** 2 + 2 * self.k / self.eps

    def violations(self) -> list[str]:
        out = []
        if self.comm_bits > self.bit_bound + 1e-9:
            out.append("comm_bits <= 2k(a+1)/eps^2 + 2k/eps")
        if self.dist_error > self.delta + 2 * self.eps + 1e-9:
            out.append("dist_error <= delta + 2 eps")
        if abs(self.chain_rule_sum - self.information) > 1e-9:
            out.append("sum of a_i equals I(XY:T)")
        prev = self.delta
        for e in self.pass_errors:
            if e > prev + self.eps / self.k + 1e-9:
                out.append("each pass adds at most eps/k error")
            prev = e
        if self.truncated_error > self.averaged_error + self.eps + 1e-9:
            out.append("truncation adds at most eps error")
        if not self.monotone_ok:
            out.append("compressing a round never lengthens later rounds")
        if not self.length_bound_ok:
            out.append("expected round length <= 2(k/eps)(S+1)+2")
        return out

    def to_json(self) -> dict:
        return {"mode": "rounds", "comm_bits": self.comm_bits, "dist_error": self.dist_error,
                "per_round": self.per_round, "seed": self.seed, "coin_choice": self.coin_choice,
                "k": self.k, "eps": self.eps, "delta": self.delta,
                "information_cost": self.information, "chain_rule_sum": self.chain_rule_sum,
                "bit_cap": self.cap, "bit_bound": self.bit_bound,
                "pass_errors": self.pass_errors, "averaged_error": self.averaged_error,
                "truncated_error": self.truncated_error, "expected_bits": self.expected_bits,
                "violations": self.violations()}


def _threads() -> int:
    env = os.environ.get("CCOMPRESS_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def compress_multiround(proto: ProtocolTree, f: FunctionSpec, mu: JointDist, eps: float,
                        seed: int, t_max: int | None = None, coin_budget: int = 64,
                        mode: str = "skip") -> MultiCompressionReport:
    """Compress every round, truncate, then fix the public coins by seeded search.

    ``t_max`` caps each stream; None means 2^(ceil(exponent)+20) per sampler,
    whose tail mass is below double precision. Raises BudgetExhausted when no
    candidate coin reaches error delta + 2 eps.
    """
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    if coin_budget < 1:
        raise ValueError("coin_budget must be >= 1")
    if mode not in ("skip", "explicit"):
        raise ValueError("mode must be 'skip' or 'explicit'")
    delta = evaluate_error(proto, f, mu).distributional
    info = information_cost(proto, mu)
    if math.isinf(info):
        raise InfiniteDivergence("information cost is infinite")
    levels = prefix_laws(proto)
    k = proto.k
    pcp = PublicCoinProtocol(proto, {}, t_max)
    pass_errors = []
    monotone = True
    a_list = [0.0] * k
    for i in reversed(range(k)):
        st = round_state(proto, mu, i, eps, seed, levels)
        a_list[i] = st.a_i
        nxt = compress_round(st, pcp, i, eps)
        later = list(range(i + 1, k))
        if later and nxt.expected_bits(mu, later) > pcp.expected_bits(mu, later) + 1e-9:
            monotone = False
        pcp = nxt
        pass_errors.append(pcp.expected_error(f, mu))

    length_ok = True
    for i, st in pcp.states.items():
        for (m1, u), smp in st.samplers.items():
            if smp is not None and st.weights[(m1, u)] > 0:
                if pcp.round_bits(i, u, m1) > 2 * smp.a + 2 + 1e-9:
                    length_ok = False

    cap = markov_cap(k, info, eps)
    averaged = pass_errors[-1]
    truncated = pcp.expected_error(f, mu, cap)

    per_round = []
    profiles = {(x, y): pcp.round_profile(x, y)
                for xi, x in enumerate(proto.x_range) for yi, y in enumerate(proto.y_range)
                if mu.probs[xi, yi] > 0}
    for i in range(k):
        bits = ab = 0.0
        for xi, x in enumerate(proto.x_range):
            for yi, y in enumerate(proto.y_range):
                w = mu.probs[xi, yi]
                if w > 0:
                    bits += w * profiles[(x, y)][i][0]
                    ab += w * profiles[(x, y)][i][1]
        per_round.append({"i": i + 1, "a_i": a_list[i], "expected_bits": bits,
                          "abort_prob": ab})

    def attempt(c):
        return run_coin(pcp, f, mu, c, cap, mode)

    threads = _threads()
    if threads > 1 and coin_budget > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            runs = list(ex.map(attempt, range(coin_budget)))
    else:
        runs = [attempt(c) for c in range(coin_budget)]
    best = min(runs, key=lambda r: (r.error, r.cost, r.coin))
    if best.error > delta + 2 * eps + 1e-9:
        raise BudgetExhausted(
            f"best of {coin_budget} coins has error {best.error:.6g} > {delta + 2 * eps:.6g}",
            best=best)
    final = deterministic_protocol(proto, best)
    check = evaluate_error(final, f, mu).distributional
    if abs(check - best.error) > 1e-9:
        raise ArithmeticError("deterministic protocol disagrees with its coin run")
    return MultiCompressionReport(
        final_protocol=final, comm_bits=best.cost, dist_error=check, per_round=per_round,
        coin_choice={"index": best.coin, "budget": coin_budget, "mode": mode},
        seed=seed, k=k, eps=eps, delta=delta, information=info,
        chain_rule_sum=float(sum(a_list)), cap=cap, pass_errors=pass_errors,
        averaged_error=averaged, truncated_error=truncated,
        expected_bits=sum(r["expected_bits"] for r in per_round),
        monotone_ok=monotone, length_bound_ok=length_ok)
