"""Pairwise-fidelity tests for the fully connected network.

Any biseparable state, mapped to a pair of parties by LOCC, has mean
fidelity with a qubit Bell pair of at most ``1 - 1/n`` over all pairs.  Two
protocols feed that test: tracing out everything except one edge, and
teleporting through the other parties followed by one-way distillation
(whose applicability is decided by a coherent-information condition).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect

from . import linalg
from .errors import ContractError
from .linalg import ComplexMatrix
from .netstates import Topology, isotropic, phi_plus_vector

#: Largest d simulated with full density matrices; above it the visibility
#: product formula is used.
TELEPORT_SIMULATION_MAX_D = 3


def _shift_clock(d: int):
    x = np.roll(np.eye(d), 1, axis=0)
    z = np.diag(np.exp(2j * np.pi * np.arange(d) / d))
    return x, z


def bell_unitaries(d: int) -> list[np.ndarray]:
    """The d**2 operators X^a Z^b, ordered by (a, b)."""
    x, z = _shift_clock(d)
    return [np.linalg.matrix_power(x, a) @ np.linalg.matrix_power(z, b) for a in range(d) for b in range(d)]


def teleport_isotropic(state_p: float, channel_p: float, d: int, method: str = "auto") -> ComplexMatrix:
    """Teleport half of an isotropic state through an isotropic channel.

    Registers are (R, X) for the state and (S, B) for the channel.  The
    sender measures X S in the basis (V ⊗ 1)|phi+>, V = X^a Z^b, and the
    receiver applies V to B.  The outcome-averaged state on (R, B) is
    returned.  ``method="auto"`` simulates densely for d up to
    ``TELEPORT_SIMULATION_MAX_D`` and otherwise returns the isotropic
    state with the product visibility.
    """
    for v in (state_p, channel_p):
        if not 0 <= v <= 1:
            raise ContractError(f"visibility {v} outside [0, 1]")
    if method == "auto":
        method = "simulate" if d <= TELEPORT_SIMULATION_MAX_D else "formula"
    if method == "formula":
        return isotropic(state_p * channel_p, d)
    if method != "simulate":
        raise ValueError(f"unknown method {method!r}")
    linalg.check_capacity(d**4, "teleportation register space")
    full = np.kron(isotropic(state_p, d).data, isotropic(channel_p, d).data)
    full = full.reshape([d] * 8)
    phi = phi_plus_vector(d)
    out = np.zeros((d * d, d * d), dtype=np.complex128)
    for v in bell_unitaries(d):
        bra = (np.kron(v, np.eye(d)) @ phi).conj().reshape(d, d)  # <Phi_ab| on (X, S)
        # contract X and S on both sides
        reduced = np.einsum("xs,rxsbRXSB,XS->rbRB", bra, full, bra.conj())
        reduced = reduced.reshape(d * d, d * d)
        corr = np.kron(np.eye(d), v)
        out += corr @ reduced @ corr.conj().T
    return ComplexMatrix(out, (d, d))


def fit_isotropic(m: ComplexMatrix) -> tuple[float, float]:
    """Best isotropic visibility for a two-qudit state and the max-entry residual."""
    m = linalg.as_matrix(m)
    d = m.layout[0]
    fid = linalg.fidelity_with_pure(m, phi_plus_vector(d))
    v = (fid - 1 / d**2) / (1 - 1 / d**2)
    resid = m.data - (v * np.outer(phi_plus_vector(d), phi_plus_vector(d)) + (1 - v) * np.eye(d * d) / d**2)
    return v, float(np.max(np.abs(resid)))


def biseparable_fidelity_bound(n: int) -> float:
    """Upper bound 1 - 1/n on the mean pair fidelity of a biseparable state."""
    if n < 2:
        raise ContractError("need at least two parties")
    return 1 - 1 / n


def traceout_fidelity(p: float, d: int) -> float:
    """Fidelity with phi_plus of an edge kept after tracing out the rest."""
    if not 0 <= p <= 1:
        raise ContractError(f"visibility {p} outside [0, 1]")
    return p + (1 - p) / d**2


def _entropy(eigs) -> float:
    eigs = np.asarray(eigs, dtype=float)
    eigs = eigs[eigs > 0]
    return float(-np.sum(eigs * np.log2(eigs)))


def coherent_information_condition(p: float, d: int) -> float:
    """H(tr_A eta) - H(eta) in bits for eta = isotropic(p**2, d).

    The marginal is maximally mixed, and eta has one eigenvalue
    q + (1-q)/d**2 and d**2 - 1 copies of (1-q)/d**2, q = p**2.
    """
    if not 0 <= p <= 1:
        raise ContractError(f"visibility {p} outside [0, 1]")
    q = p * p
    low = (1 - q) / d**2
    spectrum = np.array([q + low] + [low] * (d * d - 1))
    return math.log2(d) - _entropy(spectrum)


def estimate_p0(d: int, tol: float = 1e-6) -> float:
    """Visibility above which the coherent-information condition holds."""
    if tol <= 0:
        raise ContractError("tol must be positive")
    lo, hi = 1 / (d + 1), 1.0
    f = lambda p: coherent_information_condition(p, d)  # noqa: E731
    if not f(lo) < 0 < f(hi):
        raise ContractError(f"no sign change of the condition on ({lo}, {hi})")
    return float(bisect(f, lo, hi, xtol=tol / 2))


@dataclass(frozen=True)
class FidelityRecord:
    n: int
    pairs: tuple[tuple[tuple[int, int], float, str], ...]

    def __post_init__(self):
        expected = [(i, j) for i in range(self.n) for j in range(i + 1, self.n)]
        if sorted(pair for pair, _, _ in self.pairs) != expected:
            raise ContractError("fidelity record must cover every pair i < j exactly once")
        if any(not 0 <= f <= 1 for _, f, _ in self.pairs):
            raise ContractError("fidelities must lie in [0, 1]")

    def mean(self) -> float:
        return math.fsum(f for _, f, _ in self.pairs) * 2 / (self.n * (self.n - 1))


@dataclass(frozen=True)
class FidelityReport:
    n: int
    p: float
    d: int
    protocol: str
    verdict: str
    bound: float
    mean_fidelity: float | None = None
    record: FidelityRecord | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "n": self.n,
            "p": self.p,
            "d": self.d,
            "protocol": self.protocol,
            "bound": self.bound,
            "verdict": self.verdict,
        }
        if self.mean_fidelity is not None:
            out["mean_fidelity"] = self.mean_fidelity
        out.update(self.extra)
        return out


def fidelity_sum_gme_test(t: Topology, protocol: str = "trace-out") -> FidelityReport:
    """Pair-fidelity GME test on a complete network with identical isotropic edges.

    ``trace-out`` (qubit edges only): every pair keeps its own edge, and GME
    is certified when the mean fidelity beats ``1 - 1/n``.
    ``teleport``: reports the visibility p**2 each pair obtains per
    teleported copy, the n - 2 copies available, and the coherent-information
    condition; the distillation itself is not simulated, so the verdict is
    always ``inconclusive``.
    """
    if not t.is_complete() or t.n < 2:
        raise ContractError("fidelity-sum test needs a complete graph")
    uni = t.uniform_isotropic()
    if uni is None:
        raise ContractError("fidelity-sum test needs identical isotropic edges")
    p, d = uni
    n = t.n
    bound = biseparable_fidelity_bound(n)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    if protocol == "trace-out":
        if d != 2:
            raise ContractError("the pair-fidelity bound is stated for qubit Bell pairs; trace-out needs d=2")
        f = traceout_fidelity(p, d)
        record = FidelityRecord(n, tuple((pair, f, "trace-out") for pair in pairs))
        mean = record.mean()
        verdict = "GME" if mean > bound else "inconclusive"
        return FidelityReport(n, p, d, "trace-out", verdict, bound, mean, record)
    if protocol == "teleport":
        cond = coherent_information_condition(p, d)
        extra = {
            "pair_visibility": p * p,
            "copies": n - 2,
            "condition": cond,
            "distillable": cond > 0,
        }
        return FidelityReport(n, p, d, "teleport", "inconclusive", bound, None, None, extra)
    raise ContractError(f"unknown protocol {protocol!r}")
