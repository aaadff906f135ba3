"""Fully decomposable GME witnesses for three-party qubit networks, the GHZ
witness, and threshold scans over the visibility.

A witness ``W`` is fully decomposable when for every single-party side ``M``
it splits as ``W = P_M + Q_M^{T_M}`` with ``P_M, Q_M`` PSD and ``T_M`` the
partial transpose on the registers of ``M``.  Then ``tr(W rho) >= 0`` on every
biseparable ``rho``, so a negative value certifies genuine multipartite
entanglement.
"""

from __future__ import annotations

import hashlib
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from . import linalg, serialize
from .errors import ContractError, InconsistencyError, ThresholdError
from .linalg import ComplexMatrix
from .netstates import (
    EdgeStateSpec,
    TensorSum,
    Topology,
    densify,
    ghz,
    partial_transpose_sum,
    pen_state,
    phi_plus,
    swap,
    tensor_trace,
)
from .separability import BiseparabilityCertificate, verify_certificate

DECOMPOSITION_PSD_TOL = 1e-10
DECOMPOSITION_IDENTITY_TOL = 1e-12

_ID = np.eye(4, dtype=np.complex128)
_PHI = phi_plus(2).data
_PI = swap(2).data


def _sum(n, edges, terms) -> TensorSum:
    return TensorSum(n, edges, ((2, 2),) * len(edges), tuple(terms))


@dataclass(frozen=True)
class DecompositionCheck:
    side: tuple[int, ...]
    p_min_eigenvalue: float
    q_min_eigenvalue: float
    identity_error: float

    @property
    def passed(self) -> bool:
        return (self.p_min_eigenvalue >= -DECOMPOSITION_PSD_TOL
                and self.q_min_eigenvalue >= -DECOMPOSITION_PSD_TOL
                and self.identity_error <= DECOMPOSITION_IDENTITY_TOL)


@dataclass(frozen=True)
class WitnessCertificate:
    """A witness operator with its per-side P/Q decompositions.

    ``topology`` maps a visibility to the network the witness targets.
    """

    name: str
    W: TensorSum
    decompositions: dict = field(compare=False)
    topology: Callable[[float], Topology] = field(compare=False)

    def check(self) -> list[DecompositionCheck]:
        """Dense re-check of every decomposition."""
        w = densify(self.W).data
        out = []
        for side, (p_m, q_m) in sorted(self.decompositions.items()):
            p_dense = densify(p_m)
            q_dense = densify(q_m)
            q_pt = densify(partial_transpose_sum(q_m, side)).data
            out.append(DecompositionCheck(
                side,
                linalg.min_eigenvalue(p_dense) if p_m.terms else 0.0,
                linalg.min_eigenvalue(q_dense),
                float(np.max(np.abs(w - p_dense.data - q_pt))),
            ))
        return out

    def is_valid(self) -> bool:
        return all(c.passed for c in self.check())

    def value(self, p: float) -> float:
        return evaluate_witness(self.W, pen_state(self.topology(p)))


def witness_star3() -> WitnessCertificate:
    """Witness for the three-party qubit star (centre 0, edges 01 and 02)."""
    edges = ((0, 1), (0, 2))
    i, f, pi = _ID, _PHI, _PI
    w = _sum(3, edges, [(1, (i, i)), (2, (i, f)), (2, (f, i)), (-8, (f, f))])
    p_a = _sum(3, edges, [(2, (f, i - f)), (2, (i - f, f))])
    q_a = _sum(3, edges, [(0.5, (i - pi, i + pi)), (0.5, (i + pi, i - pi))])
    q_b = _sum(3, edges, [(1, (i + pi, i - f)), (3, (i - pi, f))])
    q_c = _sum(3, edges, [(1, (i - f, i + pi)), (3, (f, i - pi))])
    decomps = {(0,): (p_a, q_a), (1,): (w.zero(), q_b), (2,): (w.zero(), q_c)}
    return WitnessCertificate("star3", w, decomps, lambda p: Topology.star(3, EdgeStateSpec.iso(p, 2)))


def witness_cc3() -> WitnessCertificate:
    """Witness for the fully connected three-party qubit network."""
    edges = ((0, 1), (0, 2), (1, 2))
    i, f, pi = _ID, _PHI, _PI
    w = _sum(3, edges, [
        (1, (i, i, f)), (1, (i, f, i)), (1, (f, i, i)),
        (-1, (i, f, f)), (-1, (f, f, i)), (-1, (f, i, f)), (-3, (f, f, f)),
    ])
    p_a = _sum(3, edges, [(1, (i, f, i - f)), (1, (f, i - f, i - f))])
    q_a = _sum(3, edges, [(0.5, (i - pi, i + pi, f)), (0.5, (i + pi, i - pi, f))])
    p_b = _sum(3, edges, [(1, (i, i - f, f)), (1, (f, i - f, i - f))])
    # the swap pair sits on the two edges through party 1, phi_plus on edge 02
    q_b = _sum(3, edges, [(0.5, (i - pi, f, i + pi)), (0.5, (i + pi, f, i - pi))])
    p_c = _sum(3, edges, [(1, (i - f, f, i)), (1, (i - f, i - f, f))])
    q_c = _sum(3, edges, [(0.5, (f, i - pi, i + pi)), (0.5, (f, i + pi, i - pi))])
    decomps = {(0,): (p_a, q_a), (1,): (p_b, q_b), (2,): (p_c, q_c)}
    return WitnessCertificate("cc3", w, decomps, lambda p: Topology.complete(3, EdgeStateSpec.iso(p, 2)))


def evaluate_witness(w: TensorSum, s: TensorSum) -> float:
    """Real expectation value tr(w s), computed factor-wise."""
    val = tensor_trace(w, s)
    if abs(val.imag) > 1e-12 * max(1.0, abs(val.real)):
        raise ContractError(f"witness expectation has imaginary part {val.imag:.3g}")
    return float(val.real)


def ghz_witness(n: int, d: int) -> ComplexMatrix:
    """Identity/d minus the GHZ projector on n qudits."""
    g = ghz(n, d)
    dim = d**n
    return ComplexMatrix(np.eye(dim) / d - np.outer(g, g.conj()), (d,) * n)


def random_biseparable_state(party_dims: Sequence[int], rng: np.random.Generator,
                             n_components: int = 4) -> ComplexMatrix:
    """Dirichlet(1) mixture of pure states, each a product of Haar vectors
    across its own random bipartition."""
    party_dims = [int(x) for x in party_dims]
    n = len(party_dims)
    if n < 2:
        raise ContractError("need at least two parties")
    dim = math.prod(party_dims)
    weights = rng.dirichlet(np.ones(n_components))
    rho = np.zeros((dim, dim), dtype=np.complex128)
    for w in weights:
        while True:
            mask = rng.integers(0, 2, size=n)
            if 0 < mask.sum() < n:
                break
        side = [q for q in range(n) if mask[q]]
        other = [q for q in range(n) if not mask[q]]
        vecs = []
        for group in (side, other):
            gd = math.prod(party_dims[q] for q in group)
            v = rng.normal(size=gd) + 1j * rng.normal(size=gd)
            vecs.append(v / np.linalg.norm(v))
        psi = np.kron(vecs[0], vecs[1]).reshape([party_dims[q] for q in side + other])
        order = side + other
        psi = psi.transpose([order.index(q) for q in range(n)]).ravel()
        rho += w * np.outer(psi, psi.conj())
    return ComplexMatrix(rho, tuple(party_dims))


@dataclass(frozen=True)
class ScanRow:
    p: float
    classification: str
    witness_value: float | None
    certificate_id: str


@dataclass(frozen=True)
class Bracket:
    low: float
    high: float
    before: str
    after: str


@dataclass(frozen=True)
class ScanTable:
    rows: tuple[ScanRow, ...]

    def brackets(self) -> list[Bracket]:
        """Consecutive grid points across which the classification changes."""
        out = []
        for a, b in zip(self.rows, self.rows[1:]):
            if a.classification != b.classification:
                out.append(Bracket(a.p, b.p, a.classification, b.classification))
        return out

    def last(self, classification: str) -> float | None:
        ps = [r.p for r in self.rows if r.classification == classification]
        return max(ps) if ps else None

    def first(self, classification: str) -> float | None:
        ps = [r.p for r in self.rows if r.classification == classification]
        return min(ps) if ps else None


def _digest(obj) -> str:
    return hashlib.sha256(serialize.dumps(obj).encode()).hexdigest()[:16]


def certificate_id(cert: BiseparabilityCertificate) -> str:
    return _digest(cert.to_json())


def classify(p: float, witness: WitnessCertificate | None = None,
             decompose: Callable[[float], BiseparabilityCertificate] | None = None,
             tol: float = 1e-12) -> ScanRow:
    """Classify one visibility with a witness and/or a biseparable builder."""
    value = witness.value(p) if witness is not None else None
    gme = value is not None and value < -tol
    cert = None
    if decompose is not None:
        try:
            cand = decompose(p)
        except ThresholdError:
            cand = None
        if cand is not None and verify_certificate(cand).passed:
            cert = cand
    if gme and cert is not None:
        raise InconsistencyError(f"p={p}: witness value {value} < 0 but a biseparable certificate verifies")
    if gme:
        return ScanRow(p, "GME", value, _digest({"witness": witness.name, "p": p, "value": value}))
    if cert is not None:
        return ScanRow(p, "biseparable", value, certificate_id(cert))
    return ScanRow(p, "undetermined", value, "")


def threshold_scan(grid: Sequence[float], witness: WitnessCertificate | None = None,
                   decompose: Callable[[float], BiseparabilityCertificate] | None = None,
                   tol: float = 1e-12) -> ScanTable:
    """Classify every grid point; see :meth:`ScanTable.brackets`."""
    grid = [float(p) for p in grid]
    if any(not 0 <= p <= 1 for p in grid):
        raise ContractError("grid values must lie in [0, 1]")
    return ScanTable(tuple(classify(p, witness, decompose, tol) for p in grid))


def make_grid(lo: float, step: float, hi: float) -> list[float]:
    """Inclusive grid lo, lo+step, ..., <= hi, rounded to kill drift."""
    if step <= 0:
        raise ContractError("grid step must be positive")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + k * step, 12) for k in range(max(count, 0))]
