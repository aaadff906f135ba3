"""Star networks with a single noisy edge: GME via a local projection onto a
GHZ-like state, bilocality via an unsteerable edge, and the growth factor
behind multi-copy activation of genuine multipartite nonlocality."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import ContractError
from .linalg import ComplexMatrix
from .netstates import TensorSum, ghz, maximally_mixed, phi_plus
from .witnesses import ghz_witness


@dataclass(frozen=True)
class TauState:
    """Star on n parties (centre 0): isotropic(p) on edge (0, 1), phi_plus elsewhere."""

    n: int
    d: int
    p: float
    state: TensorSum


def tau_state(n: int, d: int, p: float) -> TauState:
    if n < 3:
        raise ContractError("the star needs at least 3 parties")
    if d < 2 or not 0 <= p <= 1:
        raise ContractError("need d >= 2 and p in [0, 1]")
    edges = tuple((0, i) for i in range(1, n))
    dims = ((d, d),) * (n - 1)
    phi, noise = phi_plus(d).data, maximally_mixed(d).data
    rest = (phi,) * (n - 2)
    terms = ((p, (phi,) + rest), (1 - p, (noise,) + rest))
    return TauState(n, d, float(p), TensorSum(n, edges, dims, terms))


def project_tau(tau: TauState) -> ComplexMatrix:
    """Normalized state after the centre keeps only its all-equal digits.

    Closed form on registers (centre, leaf 1, ..., leaf n-1):
    p GHZ + (1-p)/d**2 sum_ij |i j i..i><i j i..i|.
    """
    n, d, p = tau.n, tau.d, tau.p
    dim = d**n
    linalg.check_capacity(dim, "projected star state")
    g = ghz(n, d)
    out = p * np.outer(g, g.conj())
    diag = np.zeros(dim)
    for i in range(d):
        for j in range(d):
            digits = [i, j] + [i] * (n - 2)
            diag[int(np.ravel_multi_index(digits, (d,) * n))] += (1 - p) / d**2
    return ComplexMatrix(out + np.diag(diag), (d,) * n)


def ghz_witness_value(n: int, d: int, p: float) -> float:
    """tr(W rho) for the GHZ witness on the projected star state (dense)."""
    rho = project_tau(tau_state(n, d, p))
    return float(np.real(np.trace(ghz_witness(n, d).data @ rho.data)))


def unsteerable_window(d: int) -> tuple[float, float]:
    """Visibilities for which a two-qudit isotropic state is entangled yet unsteerable."""
    if d < 2:
        raise ContractError("d must be at least 2")
    high = (3 * d - 1) * (d - 1) ** (d - 1) / ((d + 1) * d**d)
    return 1 / (d + 1), high


@dataclass(frozen=True)
class GmnlVerdict:
    n: int
    d: int
    p: float
    witness_value: float
    gme: bool
    not_gmnl: bool
    note: str

    def to_json(self) -> dict:
        return {"n": self.n, "d": self.d, "p": self.p, "witness_value": self.witness_value,
                "gme": self.gme, "not_gmnl": self.not_gmnl, "note": self.note}


def gme_not_gmnl_flag(n: int, d: int, p: float, tol: float = 1e-12) -> GmnlVerdict:
    """GME and not-GMNL flags for the single-noisy-edge star.

    GME: the GHZ witness is negative on the projected state (local
    operations preserve biseparability).  Not GMNL: the noisy edge is
    unsteerable, which makes every correlation local across that leaf.
    """
    try:
        value = ghz_witness_value(n, d, p)
    except linalg.CapacityError:
        value = (d - 1 - p * (d * d - 1)) / d**2
    gme = value < -tol
    not_gmnl = p <= unsteerable_window(d)[1]
    if gme and not_gmnl:
        note = "GME but not GMNL; enough copies activate GMNL"
    elif gme:
        note = "GME; nonlocality undecided"
    elif not_gmnl:
        note = "not certified GME; not GMNL"
    else:
        note = "undetermined"
    return GmnlVerdict(n, d, float(p), value, gme, not_gmnl, note)


@dataclass(frozen=True)
class Povm:
    """Effects with outcome labels; ``layout`` is the register layout they act on."""

    effects: tuple[ComplexMatrix, ...]
    labels: tuple = ()

    def __post_init__(self):
        effects = tuple(linalg.as_matrix(e) for e in self.effects)
        if not effects:
            raise ContractError("a POVM needs at least one effect")
        if len({e.dim for e in effects}) != 1:
            raise ContractError("all effects must have the same dimension")
        labels = tuple(self.labels) or tuple(range(len(effects)))
        if len(labels) != len(effects):
            raise ContractError("one label per effect")
        object.__setattr__(self, "effects", effects)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.effects[0].dim

    def min_eigenvalue(self) -> float:
        return min(linalg.min_eigenvalue(e) for e in self.effects)

    def completeness_error(self) -> float:
        total = sum((e.data for e in self.effects), np.zeros((self.dim, self.dim)))
        return float(np.max(np.abs(total - np.eye(self.dim))))

    def is_valid(self, tol: float = 1e-10) -> bool:
        return self.min_eigenvalue() >= -tol and self.completeness_error() <= tol


def effective_povm(e: Povm, tau_b: ComplexMatrix, dims: Sequence[int]) -> Povm:
    """Effects tr_B(E (1 ⊗ tau_B)) on the first factor of an A ⊗ B system.

    ``dims = (d_A, d_B)``.
    """
    d_a, d_b = (int(x) for x in dims)
    tau_b = linalg.as_matrix(tau_b)
    if tau_b.dim != d_b or e.dim != d_a * d_b:
        raise ContractError(f"dimension mismatch: POVM {e.dim}, state {tau_b.dim}, dims {(d_a, d_b)}")
    if abs(tau_b.trace() - 1) > 1e-10 or not linalg.is_psd(tau_b, 1e-10):
        raise ContractError("tau_B must be a density matrix")
    side = np.kron(np.eye(d_a), tau_b.data)
    out = []
    for eff in e.effects:
        prod = ComplexMatrix(eff.data @ side, (d_a, d_b))
        f = linalg.partial_trace(prod, [1]).data
        out.append(ComplexMatrix(0.5 * (f + f.conj().T), (d_a,)))
    return Povm(tuple(out), e.labels)


def _is_power_of_two(x: int) -> bool:
    return x >= 1 and x & (x - 1) == 0


def superactivation_ratio(d: int, p: float, n: int, k: int) -> float:
    """Growth factor (F d)**k / k**(2(n-1)) of the quantum-to-bilocal ratio.

    ``F = p + (1-p)/d**2``.  Universal constants are omitted, so only the
    growth in k is meaningful.
    """
    if not _is_power_of_two(d) or d < 2:
        raise ContractError("the game construction needs d to be a power of 2")
    if n < 3 or k < 1:
        raise ContractError("need n >= 3 and k >= 1")
    f = p + (1 - p) / d**2
    if f * d <= 1 + 1e-15:
        raise ContractError(f"entanglement fraction {f} does not exceed 1/d; the factor cannot grow")
    return math.exp(k * math.log(f * d) - 2 * (n - 1) * math.log(k))


def superactivation_min_copies(d: int, p: float, n: int, target: float, k_max: int = 1 << 20) -> int:
    """Smallest k whose growth factor exceeds ``target``."""
    for k in range(1, k_max + 1):
        if superactivation_ratio(d, p, n, k) > target:
            return k
    raise ContractError(f"factor stays below {target} up to k={k_max}")
