"""Network topologies, canonical bipartite states and pair-entangled network states.

A network state lives on one register per edge endpoint.  The dense
("canonical") register order is party-major: parties ascending, and within
a party one register per incident edge, edges in lexicographic order.

Large network states are handled as :class:`TensorSum` objects, weighted
sums of products of per-edge factors, so that traces and norms never need
the exponentially large dense matrix.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

from . import linalg
from .errors import CapacityError, ContractError
from .linalg import ComplexMatrix

Edge = tuple[int, int]

#: Materialization cap for binomial expansions of network states.
TERM_CAP = 1 << 20


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.complex128)
    a.flags.writeable = False
    return a


def phi_plus_vector(d: int) -> np.ndarray:
    v = np.zeros(d * d, dtype=np.complex128)
    v[:: d + 1] = 1 / math.sqrt(d)
    return v


def phi_plus(d: int) -> ComplexMatrix:
    """Projector onto the maximally entangled state of two qudits."""
    return linalg.projector(phi_plus_vector(d), (d, d))


def maximally_mixed(d: int) -> ComplexMatrix:
    """Normalized identity on two qudits."""
    return ComplexMatrix(np.eye(d * d) / (d * d), (d, d))


def swap(d: int) -> ComplexMatrix:
    s = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            s[i * d + j, j * d + i] = 1
    return ComplexMatrix(s, (d, d))


def _check_visibility(p: float, d: int) -> None:
    if d < 2:
        raise ContractError(f"local dimension must be at least 2, got {d}")
    if not 0 <= p <= 1:
        raise ContractError(f"visibility must lie in [0, 1], got {p}")


def isotropic(p: float, d: int) -> ComplexMatrix:
    """p * phi_plus + (1 - p) * identity / d**2."""
    _check_visibility(p, d)
    return ComplexMatrix(p * phi_plus(d).data + (1 - p) * np.eye(d * d) / (d * d), (d, d))


def ghz(n: int, d: int) -> np.ndarray:
    """GHZ vector sum_i |i>^n / sqrt(d)."""
    if n < 2 or d < 2:
        raise ContractError("GHZ needs n >= 2 and d >= 2")
    dim = d**n
    linalg.check_capacity(dim, "GHZ vector")
    v = np.zeros(dim, dtype=np.complex128)
    step = sum(d**k for k in range(n))
    v[::step] = 1 / math.sqrt(d)
    return v


@dataclass(frozen=True)
class EdgeStateSpec:
    """State placed on one edge: isotropic(p, d), maximally_entangled(d) or explicit."""

    kind: str
    d: int = 2
    p: float | None = None
    matrix: ComplexMatrix | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind == "isotropic":
            _check_visibility(self.p, self.d)
        elif self.kind == "maximally_entangled":
            if self.d < 2:
                raise ContractError("local dimension must be at least 2")
        elif self.kind == "explicit":
            if self.matrix is None or len(self.matrix.layout) != 2:
                raise ContractError("explicit edge state needs a two-register ComplexMatrix")
        else:
            raise ContractError(f"unknown edge state kind {self.kind!r}")

    @classmethod
    def iso(cls, p: float, d: int = 2) -> EdgeStateSpec:
        return cls("isotropic", d=d, p=float(p))

    @classmethod
    def max_entangled(cls, d: int = 2) -> EdgeStateSpec:
        return cls("maximally_entangled", d=d)

    @classmethod
    def explicit(cls, m: ComplexMatrix) -> EdgeStateSpec:
        m = linalg.as_matrix(m)
        return cls("explicit", d=m.layout[0], matrix=m)

    @property
    def dims(self) -> tuple[int, int]:
        if self.kind == "explicit":
            return tuple(self.matrix.layout)
        return (self.d, self.d)

    @property
    def visibility(self) -> float | None:
        if self.kind == "isotropic":
            return self.p
        if self.kind == "maximally_entangled":
            return 1.0
        return None

    def to_matrix(self) -> ComplexMatrix:
        if self.kind == "isotropic":
            return isotropic(self.p, self.d)
        if self.kind == "maximally_entangled":
            return phi_plus(self.d)
        return self.matrix

    def is_separable(self) -> bool | None:
        """Exact for isotropic edges, ``None`` when not decidable here."""
        v = self.visibility
        if v is None:
            return None
        return v <= 1 / (self.d + 1) + 1e-12

    def to_json(self) -> dict:
        if self.kind == "isotropic":
            return {"kind": "isotropic", "p": self.p, "d": self.d}
        if self.kind == "maximally_entangled":
            return {"kind": "maximally_entangled", "d": self.d}
        flat = self.matrix.data.ravel()
        return {
            "kind": "explicit",
            "dims": list(self.matrix.layout),
            "matrix": [[float(z.real), float(z.imag)] for z in flat],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> EdgeStateSpec:
        kind = obj.get("kind")
        if kind == "isotropic":
            return cls.iso(float(obj["p"]), int(obj.get("d", 2)))
        if kind == "maximally_entangled":
            return cls.max_entangled(int(obj.get("d", 2)))
        if kind == "explicit":
            dims = tuple(int(x) for x in obj["dims"])
            dim = math.prod(dims)
            vals = np.array([complex(re, im) for re, im in obj["matrix"]])
            return cls.explicit(ComplexMatrix(vals.reshape(dim, dim), dims))
        raise ContractError(f"unknown edge state kind {kind!r}")


@dataclass(frozen=True)
class Topology:
    """Undirected simple graph on parties 0..n-1 with a state on every edge."""

    n: int
    edges: tuple[Edge, ...]
    edge_states: Mapping[Edge, EdgeStateSpec] = field(compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ContractError("a topology needs at least one party")
        norm = []
        for e in self.edges:
            i, j = int(e[0]), int(e[1])
            if i == j:
                raise ContractError(f"self-loop at party {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ContractError(f"edge {e} references a party outside 0..{self.n - 1}")
            norm.append((min(i, j), max(i, j)))
        if len(set(norm)) != len(norm):
            raise ContractError("duplicate edges are not allowed")
        edges = tuple(sorted(norm))
        states = {}
        for e, spec in dict(self.edge_states).items():
            key = (min(e), max(e))
            if key not in edges:
                raise ContractError(f"state given for unknown edge {e}")
            states[key] = spec
        missing = [e for e in edges if e not in states]
        if missing:
            raise ContractError(f"edges without a state: {missing}")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "edge_states", MappingProxyType(states))

    @classmethod
    def uniform(cls, n: int, edges: Iterable[Edge], spec: EdgeStateSpec) -> Topology:
        edges = list(edges)
        return cls(n, tuple(edges), {(min(e), max(e)): spec for e in edges})

    @classmethod
    def star(cls, n: int, spec: EdgeStateSpec) -> Topology:
        """Star with centre party 0."""
        return cls.uniform(n, [(0, i) for i in range(1, n)], spec)

    @classmethod
    def path(cls, n: int, spec: EdgeStateSpec) -> Topology:
        return cls.uniform(n, [(i, i + 1) for i in range(n - 1)], spec)

    @classmethod
    def cycle(cls, n: int, spec: EdgeStateSpec) -> Topology:
        if n < 3:
            raise ContractError("a cycle needs at least 3 parties")
        return cls.uniform(n, [(i, (i + 1) % n) for i in range(n)], spec)

    @classmethod
    def complete(cls, n: int, spec: EdgeStateSpec) -> Topology:
        return cls.uniform(n, itertools.combinations(range(n), 2), spec)

    def with_isotropic(self, p: float, d: int) -> Topology:
        spec = EdgeStateSpec.iso(p, d)
        return Topology(self.n, self.edges, {e: spec for e in self.edges})

    def uniform_isotropic(self) -> tuple[float, int] | None:
        """(p, d) when every edge is isotropic with the same parameters."""
        specs = {(s.kind, s.p, s.d) for s in self.edge_states.values()}
        if len(specs) != 1:
            return None
        kind, p, d = specs.pop()
        return (p, d) if kind == "isotropic" else None

    def neighbors(self, i: int) -> list[int]:
        return sorted({b if a == i else a for a, b in self.edges if i in (a, b)})

    def incident_edges(self, i: int) -> list[Edge]:
        return [e for e in self.edges if i in e]

    def degree(self, i: int) -> int:
        return len(self.incident_edges(i))

    def components(self, edges: Iterable[Edge] | None = None) -> list[list[int]]:
        """Connected components (sorted party lists) of the graph on ``edges``."""
        edges = self.edges if edges is None else list(edges)
        adj = {i: set() for i in range(self.n)}
        for a, b in edges:
            adj[a].add(b)
            adj[b].add(a)
        seen, comps = set(), []
        for start in range(self.n):
            if start in seen:
                continue
            stack, comp = [start], []
            seen.add(start)
            while stack:
                u = stack.pop()
                comp.append(u)
                for w in adj[u]:
                    if w not in seen:
                        seen.add(w)
                        stack.append(w)
            comps.append(sorted(comp))
        return comps

    def is_connected(self) -> bool:
        return len(self.components()) == 1

    def is_tree(self) -> bool:
        return self.is_connected() and len(self.edges) == self.n - 1

    def is_complete(self) -> bool:
        return len(self.edges) == self.n * (self.n - 1) // 2

    def is_cycle(self) -> bool:
        return self.n >= 3 and self.is_connected() and all(self.degree(i) == 2 for i in range(self.n))

    def crossing_edges(self, side: Iterable[int]) -> list[Edge]:
        side = set(side)
        return [e for e in self.edges if (e[0] in side) != (e[1] in side)]

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "edges": [{"i": i, "j": j, "state": self.edge_states[(i, j)].to_json()} for i, j in self.edges],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> Topology:
        try:
            n = int(obj["n"])
            edges, states = [], {}
            for item in obj["edges"]:
                e = (int(item["i"]), int(item["j"]))
                edges.append(e)
                states[(min(e), max(e))] = EdgeStateSpec.from_json(item["state"])
        except (KeyError, TypeError) as exc:
            raise ContractError(f"malformed topology JSON: {exc}") from exc
        return cls(n, tuple(edges), states)


@dataclass(frozen=True)
class PartyLayout:
    """Register bookkeeping for the canonical party-major order."""

    n: int
    registers: tuple[tuple[int, Edge], ...]
    register_dims: tuple[int, ...]

    @classmethod
    def for_edges(cls, n: int, edges, dims) -> PartyLayout:
        dim_of = dict(zip(edges, dims))
        regs, rdims = [], []
        for party in range(n):
            for e in sorted(e for e in edges if party in e):
                regs.append((party, e))
                rdims.append(dim_of[e][0 if e[0] == party else 1])
        return cls(n, tuple(regs), tuple(rdims))

    @classmethod
    def from_topology(cls, t: Topology) -> PartyLayout:
        return cls.for_edges(t.n, t.edges, [t.edge_states[e].dims for e in t.edges])

    def party_registers(self, party: int) -> list[int]:
        return [k for k, (q, _) in enumerate(self.registers) if q == party]

    def registers_of(self, parties: Iterable[int]) -> list[int]:
        parties = set(parties)
        return [k for k, (q, _) in enumerate(self.registers) if q in parties]

    def party_dims(self) -> list[int]:
        return [math.prod(self.register_dims[k] for k in self.party_registers(q)) for q in range(self.n)]


Term = tuple[complex, tuple[np.ndarray, ...]]


@dataclass(frozen=True, eq=False)
class TensorSum:
    """Weighted sum of products of per-edge factors.

    ``terms[k] = (weight, factors)`` with ``factors`` aligned to ``edges``;
    each factor is a ``d_i d_j`` square matrix with the lower-indexed
    party's register first.
    """

    n_parties: int
    edges: tuple[Edge, ...]
    dims: tuple[tuple[int, int], ...]
    terms: tuple[Term, ...] = ()
    metadata: Mapping = field(default_factory=dict)

    def __post_init__(self):
        edges = tuple((int(a), int(b)) for a, b in self.edges)
        if list(edges) != sorted(set(edges)) or any(a >= b for a, b in edges):
            raise ContractError("TensorSum edges must be sorted, unique pairs i < j")
        dims = tuple((int(a), int(b)) for a, b in self.dims)
        if len(dims) != len(edges):
            raise ContractError("one dimension pair per edge is required")
        terms = []
        for w, factors in self.terms:
            factors = tuple(f if isinstance(f, np.ndarray) and not f.flags.writeable else _frozen(f)
                            for f in (getattr(f, "data", f) for f in factors))
            if len(factors) != len(edges):
                raise ContractError("every term must have one factor per edge")
            for f, (da, db) in zip(factors, dims):
                if f.shape != (da * db, da * db):
                    raise ContractError(f"factor shape {f.shape} does not match edge dims {(da, db)}")
            terms.append((complex(w), factors))
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "terms", tuple(terms))
        object.__setattr__(self, "metadata", MappingProxyType(dict(self.metadata)))

    @classmethod
    def product(cls, n_parties: int, factors: Mapping[Edge, object], weight: complex = 1.0) -> TensorSum:
        """Single-term sum from an edge -> factor mapping."""
        edges = sorted(factors)
        mats = [linalg.as_matrix(factors[e]) for e in edges]
        dims = [m.layout if len(m.layout) == 2 else _square_dims(m.dim) for m in mats]
        return cls(n_parties, tuple(edges), tuple(dims), ((weight, tuple(m.data for m in mats)),))

    @classmethod
    def from_terms(cls, n_parties: int, terms: Iterable[tuple[complex, Mapping[Edge, object]]],
                   dims: Mapping[Edge, tuple[int, int]] | None = None) -> TensorSum:
        terms = list(terms)
        if not terms and dims is None:
            raise ContractError("an empty TensorSum needs explicit edge dims")
        edges = sorted(dims) if dims is not None else sorted(terms[0][1])
        if dims is None:
            dims = {}
            for e in edges:
                m = linalg.as_matrix(terms[0][1][e])
                dims[e] = m.layout if len(m.layout) == 2 else _square_dims(m.dim)
        out = []
        for w, fmap in terms:
            if sorted(fmap) != edges:
                raise ContractError("all terms must share the same edge set")
            out.append((w, tuple(getattr(fmap[e], "data", fmap[e]) for e in edges)))
        return cls(n_parties, tuple(edges), tuple(dims[e] for e in edges), tuple(out))

    def zero(self) -> TensorSum:
        return TensorSum(self.n_parties, self.edges, self.dims, ())

    @property
    def layout(self) -> PartyLayout:
        return PartyLayout.for_edges(self.n_parties, self.edges, self.dims)

    @property
    def dense_dim(self) -> int:
        return math.prod(a * b for a, b in self.dims)

    def factor(self, k: int, edge: Edge) -> np.ndarray:
        return self.terms[k][1][self.edges.index(edge)]

    def factor_map(self, k: int) -> dict[Edge, np.ndarray]:
        return dict(zip(self.edges, self.terms[k][1]))

    def _check_compatible(self, other: TensorSum) -> None:
        if self.edges != other.edges or self.dims != other.dims or self.n_parties != other.n_parties:
            raise ContractError("TensorSums live on different edge sets or dimensions")

    def __add__(self, other: TensorSum) -> TensorSum:
        self._check_compatible(other)
        return TensorSum(self.n_parties, self.edges, self.dims, self.terms + other.terms)

    def scale(self, c: complex) -> TensorSum:
        return TensorSum(self.n_parties, self.edges, self.dims, tuple((w * c, f) for w, f in self.terms))

    def __sub__(self, other: TensorSum) -> TensorSum:
        return self + other.scale(-1)

    def trace(self) -> complex:
        total = 0j
        for w, factors in self.terms:
            total += w * math.prod(complex(np.trace(f)) for f in factors)
        return total

    def __len__(self):
        return len(self.terms)


def _square_dims(dim: int) -> tuple[int, int]:
    d = math.isqrt(dim)
    if d * d != dim:
        raise ContractError(f"cannot infer two-register dims for dimension {dim}")
    return (d, d)


def weighted_sum(parts: Iterable[tuple[float, TensorSum]]) -> TensorSum:
    parts = list(parts)
    if not parts:
        raise ContractError("weighted_sum of nothing")
    base = parts[0][1]
    terms = []
    for w, s in parts:
        base._check_compatible(s)
        terms.extend((w * tw, f) for tw, f in s.terms)
    return TensorSum(base.n_parties, base.edges, base.dims, tuple(terms))


def _edge_major_to_party_major(n, edges, dims) -> list[int]:
    position = {}
    k = 0
    for e in edges:
        position[(e[0], e)] = k
        position[(e[1], e)] = k + 1
        k += 2
    layout = PartyLayout.for_edges(n, edges, dims)
    return [position[r] for r in layout.registers]


def densify(s: TensorSum) -> ComplexMatrix:
    """Dense matrix of a TensorSum in canonical party-major register order."""
    dim = s.dense_dim
    linalg.check_capacity(dim, "dense network state")
    flat_layout = tuple(x for pair in s.dims for x in pair)
    acc = np.zeros((dim, dim), dtype=np.complex128)
    for w, factors in s.terms:
        m = np.ones((1, 1), dtype=np.complex128)
        for f in factors:
            m = np.kron(m, f)
        acc += w * m
    order = _edge_major_to_party_major(s.n_parties, s.edges, s.dims)
    return linalg.permute_registers(ComplexMatrix(acc, flat_layout or (1,)), order) if s.edges else \
        ComplexMatrix(acc, (1,))


def tensor_trace(a: TensorSum, b: TensorSum) -> complex:
    """tr(a b) evaluated factor-wise, never forming dense matrices."""
    a._check_compatible(b)
    if not a.terms or not b.terms:
        return 0j
    wa = np.array([w for w, _ in a.terms])
    wb = np.array([w for w, _ in b.terms])
    acc = np.ones((len(wa), len(wb)), dtype=np.complex128)
    for k in range(len(a.edges)):
        fa = np.stack([f[k] for _, f in a.terms])
        fb = np.stack([f[k] for _, f in b.terms])
        acc *= np.einsum("sij,tji->st", fa, fb)
    return complex(wa @ acc @ wb)


def _transpose_sides(f: np.ndarray, dims, sides) -> np.ndarray:
    da, db = dims
    t = f.reshape(da, db, da, db)
    axes = [0, 1, 2, 3]
    for s in sides:
        axes[s], axes[s + 2] = axes[s + 2], axes[s]
    return t.transpose(axes).reshape(da * db, da * db)


def partial_transpose_sum(s: TensorSum, parties: Iterable[int]) -> TensorSum:
    """Transpose every register held by the given parties, factor by factor."""
    parties = set(parties)
    bad = [q for q in parties if not 0 <= q < s.n_parties]
    if bad:
        raise ContractError(f"parties {bad} out of range")
    sides = [[k for k, q in enumerate(e) if q in parties] for e in s.edges]
    terms = []
    for w, factors in s.terms:
        terms.append((w, tuple(_transpose_sides(f, dims, sd) if sd else f
                               for f, dims, sd in zip(factors, s.dims, sides))))
    return TensorSum(s.n_parties, s.edges, s.dims, tuple(terms))


def tensor_sum_norm(s: TensorSum) -> float:
    """Hilbert-Schmidt norm of a TensorSum without densifying.

    Each edge's factors are expressed in an orthonormal basis of their span,
    which turns the sum into a small CP tensor; its norm is then read off
    after an orthogonalizing QR sweep.  No squared quantities cancel, so
    the result is accurate near zero (the use case: reconstruction residuals).
    """
    if not s.terms:
        return 0.0
    weights = np.array([w for w, _ in s.terms])
    r = weights[np.newaxis, :]
    for k in range(len(s.edges)):
        vecs = np.stack([f[k].ravel() for _, f in s.terms])
        u, sv, _ = np.linalg.svd(vecs, full_matrices=False)
        rank = max(int(np.sum(sv > sv[0] * 1e-14)), 1) if sv[0] > 0 else 0
        if rank == 0:
            return 0.0
        coeffs = u[:, :rank] * sv[:rank]
        y = (r[:, np.newaxis, :] * coeffs.T[np.newaxis, :, :]).reshape(-1, r.shape[1])
        r = np.linalg.qr(y, mode="r")
    return float(np.linalg.norm(r.sum(axis=1)))


def _edge_factors(spec: EdgeStateSpec):
    """[(weight, factor)] decomposition of an edge state into phi_plus / noise parts."""
    if spec.kind == "isotropic":
        parts = []
        if spec.p > 0:
            parts.append((spec.p, phi_plus(spec.d).data))
        if spec.p < 1:
            parts.append((1 - spec.p, maximally_mixed(spec.d).data))
        return parts
    return [(1.0, spec.to_matrix().data)]


def iter_expansion(t: Topology) -> Iterator[Term]:
    """Lazily yield the binomial expansion of a network state, one term per
    choice of phi_plus / noise on every isotropic edge."""
    per_edge = [_edge_factors(t.edge_states[e]) for e in t.edges]
    for combo in itertools.product(*per_edge):
        yield math.prod(w for w, _ in combo), tuple(f for _, f in combo)


def pen_state(t: Topology, expand: bool = False) -> TensorSum:
    """Tensor product of the edge states of ``t``.

    By default a single product term.  ``expand=True`` materializes the
    binomial expansion (capped at ``TERM_CAP`` terms).
    """
    dims = tuple(t.edge_states[e].dims for e in t.edges)
    meta = {"connected": t.is_connected()}
    if not expand:
        factors = tuple(t.edge_states[e].to_matrix().data for e in t.edges)
        return TensorSum(t.n, t.edges, dims, ((1.0, factors),), meta)
    count = math.prod(len(_edge_factors(t.edge_states[e])) for e in t.edges)
    if count > TERM_CAP:
        raise CapacityError(f"expansion has {count} terms, cap is {TERM_CAP}")
    return TensorSum(t.n, t.edges, dims, tuple(iter_expansion(t)), meta)
