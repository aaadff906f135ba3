"""Coset game on v-bit strings modulo the Hadamard code, and its star extension.

Bit strings are stored as integers, bit i of the integer being position i.
The referee draws ``u`` uniformly and a noise string ``z`` with i.i.d.
Bernoulli(eta) bits; Alice is asked the coset of ``u``, Bob the coset of
``u ^ z``, and they win when their answers (elements of their cosets)
XOR to ``z``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, ContractError

#: Largest v for which cosets are enumerated.
MAX_V = 16
#: Largest number of Alice strategies enumerated by the exhaustive search.
EXHAUSTIVE_CAP = 10**7


def hadamard_code(v: int) -> tuple[int, ...]:
    """Codewords c_a with bit i equal to popcount(a & i) mod 2, for a < v."""
    out = []
    for a in range(v):
        word = 0
        for i in range(v):
            if bin(a & i).count("1") % 2:
                word |= 1 << i
        out.append(word)
    return tuple(out)


@dataclass(frozen=True, eq=False)
class GameSpec:
    v: int
    eta: float
    code: tuple[int, ...]
    cosets: tuple[tuple[int, ...], ...]
    coset_of: np.ndarray = field(repr=False)
    K: int = 1

    @property
    def n_questions(self) -> int:
        return len(self.cosets)

    def noise_probabilities(self) -> np.ndarray:
        """Pr(z) for every v-bit z."""
        weights = np.array([bin(z).count("1") for z in range(1 << self.v)])
        return self.eta**weights * (1 - self.eta) ** (self.v - weights)

    def coefficient(self, a: int, b: int, x: int, y: int) -> float:
        """Weight G(a, b | x, y) of winning answers; zero outside the cosets."""
        if self.coset_of[a] != x or self.coset_of[b] != y:
            return 0.0
        w = bin(a ^ b).count("1")
        return self.v * 2.0**-self.v * self.eta**w * (1 - self.eta) ** (self.v - w)

    def normalization(self) -> float:
        """sum over question pairs of the largest coefficient, raised to K."""
        pr = self.noise_probabilities()
        single = float(sum(pr[list(c)].max() for c in self.cosets))
        return single**self.K

    def classical_bound(self) -> float:
        return self.v ** (1 - 1 / (1 - self.eta))

    def quantum_bound(self) -> float:
        return (1 - 2 * self.eta) ** 2


def kv_game(v: int, eta: float) -> GameSpec:
    if v < 2 or v & (v - 1):
        raise ContractError(f"v must be a power of 2, got {v}")
    if v > MAX_V:
        raise CapacityError(f"v={v} exceeds the enumeration cap {MAX_V}; use v <= {MAX_V}")
    if not 0 <= eta <= 0.5:
        raise ContractError(f"eta must lie in [0, 1/2], got {eta}")
    code = hadamard_code(v)
    coset_of = np.full(1 << v, -1, dtype=np.int64)
    cosets = []
    for s in range(1 << v):
        if coset_of[s] >= 0:
            continue
        members = tuple(sorted(s ^ h for h in code))
        coset_of[list(members)] = len(cosets)
        cosets.append(members)
    coset_of.flags.writeable = False
    return GameSpec(v, float(eta), code, tuple(cosets), coset_of)


def star_game(g: GameSpec, K: int) -> GameSpec:
    """K parallel copies played between a centre and K leaves."""
    if K < 1:
        raise ContractError("K must be at least 1")
    return GameSpec(g.v, g.eta, g.code, g.cosets, g.coset_of, K)


def star_normalization_exhaustive(g: GameSpec, K: int) -> float:
    """Brute-force sum over question tuples of the largest product coefficient."""
    q = g.n_questions
    if (q * q) ** K * g.v ** (2 * K) > 10**8:
        raise CapacityError("exhaustive star normalization is too large")
    best = np.zeros((q, q))
    for x in range(q):
        for y in range(q):
            best[x, y] = max(g.coefficient(a, b, x, y) for a in g.cosets[x] for b in g.cosets[y])
    total = 0.0
    for xs in itertools.product(range(q), repeat=K):
        for ys in itertools.product(range(q), repeat=K):
            # answers are chosen independently per copy, so the max factorizes
            total += math.prod(best[x, y] for x, y in zip(xs, ys))
    return total


@dataclass(frozen=True)
class DeterministicStrategy:
    """Answer index (position inside the coset) for every question, per player."""

    alice: tuple[int, ...]
    bob: tuple[int, ...]


def win_matrix(g: GameSpec) -> np.ndarray:
    """M[x, i, y, j] = G(cosets[x][i], cosets[y][j] | x, y)."""
    c = np.array(g.cosets)
    pr = g.noise_probabilities()
    xor = c[:, :, None, None] ^ c[None, None, :, :]
    return g.v * 2.0**-g.v * pr[xor]


def strategy_value(g: GameSpec, s: DeterministicStrategy, m: np.ndarray | None = None) -> float:
    m = win_matrix(g) if m is None else m
    q = g.n_questions
    xs = np.arange(q)
    sub = m[xs, np.array(s.alice)][:, xs, np.array(s.bob)]
    return float(sub.sum())


def classical_value(g: GameSpec, mode: str = "exhaustive", seed: int = 0xC0FFEE,
                    restarts: int = 64) -> tuple[float, DeterministicStrategy]:
    """Best deterministic winning probability.

    ``exhaustive`` enumerates every Alice strategy and gives Bob his exact
    best response, so the optimum is exact.  ``heuristic`` runs seeded
    alternating best responses and returns a lower bound.
    """
    if g.K != 1:
        raise ContractError("classical_value handles the two-player game")
    m = win_matrix(g)
    q, v = g.n_questions, g.v
    if mode == "exhaustive":
        if v**q > EXHAUSTIVE_CAP:
            raise CapacityError(f"{v}**{q} Alice strategies exceed the cap; use mode='heuristic'")
        best, best_s = -1.0, None
        xs = np.arange(q)
        for alice in itertools.product(range(v), repeat=q):
            resp = m[xs, np.array(alice)].sum(axis=0)  # (y, j)
            bob = resp.argmax(axis=1)
            val = float(resp.max(axis=1).sum())
            if val > best + 1e-15:
                best, best_s = val, DeterministicStrategy(tuple(alice), tuple(int(b) for b in bob))
        return best, best_s
    if mode == "heuristic":
        rng = np.random.default_rng(seed)
        best, best_s = -1.0, None
        xs = np.arange(q)
        for _ in range(restarts):
            alice = rng.integers(0, v, size=q)
            prev = -1.0
            while True:
                bob = m[xs, alice].sum(axis=0).argmax(axis=1)
                alice = m[:, :, xs, bob].sum(axis=2).argmax(axis=1)
                val = float(m[xs, alice][:, xs, bob].sum())
                if val <= prev + 1e-15:
                    break
                prev = val
            if val > best + 1e-15:
                best, best_s = val, DeterministicStrategy(tuple(int(a) for a in alice), tuple(int(b) for b in bob))
        return best, best_s
    raise ContractError(f"unknown mode {mode!r}")


def answer_vectors(g: GameSpec, x: int) -> np.ndarray:
    """Rows u_a = (-1)^{a(i)} / sqrt(v) for the answers a of coset x."""
    bits = (np.array(g.cosets[x])[:, None] >> np.arange(g.v)[None, :]) & 1
    return (1 - 2 * bits) / math.sqrt(g.v)


def quantum_value_mes(g: GameSpec) -> float:
    """Winning probability with a shared maximally entangled state of dimension v.

    Each player measures the projectors onto the answer vectors of their
    coset; outcome pair (a, b) then has probability (u_a . u_b)**2 / v.
    The win probability for (u, z) is unchanged by shifting u inside or
    across cosets, so it is evaluated on the code coset and averaged over
    z with exact Bernoulli weights.
    """
    if g.v > 64:
        raise CapacityError("quantum_value_mes supports v <= 64")
    pr = g.noise_probabilities()
    u0 = answer_vectors(g, int(g.coset_of[0]))
    members = np.array(g.cosets[int(g.coset_of[0])])
    total = 0.0
    for z in range(1 << g.v):
        partners = members ^ z
        bits = (partners[:, None] >> np.arange(g.v)[None, :]) & 1
        ub = (1 - 2 * bits) / math.sqrt(g.v)
        win = float(np.sum(np.einsum("ai,ai->a", u0, ub) ** 2) / g.v)
        total += pr[z] * win
    return total


def quantum_value_full(g: GameSpec) -> float:
    """Same value summed over every coset and every z (small v only)."""
    if (1 << g.v) * g.n_questions > 1 << 16:
        raise CapacityError("full quantum evaluation is limited to v <= 8")
    pr = g.noise_probabilities()
    total = 0.0
    for x in range(g.n_questions):
        ua = answer_vectors(g, x)
        members = np.array(g.cosets[x])
        for z in range(1 << g.v):
            partners = members ^ z
            bits = (partners[:, None] >> np.arange(g.v)[None, :]) & 1
            ub = (1 - 2 * bits) / math.sqrt(g.v)
            total += pr[z] * float(np.sum(np.einsum("ai,ai->a", ua, ub) ** 2)) / g.v
    return total / g.n_questions


def game_report(v: int, eta: float, K: int = 1, mode: str | None = None, seed: int = 0xC0FFEE) -> dict:
    g = kv_game(v, eta)
    if mode is None:
        mode = "exhaustive" if v ** g.n_questions <= EXHAUSTIVE_CAP else "heuristic"
    cval, _ = classical_value(g, mode, seed=seed)
    report = {
        "v": v,
        "eta": eta,
        "classical_value": cval,
        "classical_mode": mode,
        "classical_bound": g.classical_bound(),
        "quantum_value": quantum_value_mes(g),
        "quantum_bound": g.quantum_bound(),
    }
    if K > 1:
        sg = star_game(g, K)
        norm = sg.normalization()
        report.update({"K": K, "normalization": norm, "normalized": norm <= 1 + 1e-12})
    return report
