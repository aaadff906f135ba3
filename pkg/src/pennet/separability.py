"""Biseparable decompositions of isotropic network states and their verifier.

Every builder returns a :class:`BiseparabilityCertificate`: a convex
combination of normalized component states, each claimed separable across
one bipartition (or fully separable).  :func:`verify_certificate` re-checks
a certificate from scratch, without trusting the builder.

Separability of a component is established structurally:

* term rule: all term weights are nonnegative, every factor is PSD, and every
  factor on an edge crossing the split is either a product operator or an
  isotropic state at or below the separability threshold;
* joint isotropic rule: the component mixes "phi_plus on every crossing edge"
  with "noise on every crossing edge", identical elsewhere.  Across the
  split the crossing part is then an isotropic state of dimension
  D = prod(d_e), separable iff its visibility is at most 1/(D+1).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import ContractError, ThresholdError
from .netstates import (
    EdgeStateSpec,
    Topology,
    TensorSum,
    densify,
    isotropic,
    maximally_mixed,
    pen_state,
    phi_plus,
    tensor_sum_norm,
    weighted_sum,
)

WEIGHT_TOL = 1e-12
RECONSTRUCTION_TOL = 1e-10
VISIBILITY_SLACK = 1e-12
#: Dense reconstruction / PPT checks are used up to this dimension.
DENSE_CHECK_DIM = 1 << 12
PPT_CHECK_DIM = 1 << 10
#: Largest number of components a cycle certificate may hold.
COMPONENT_CAP = 200_000


def isotropic_separable_threshold(d: int) -> float:
    """Largest separable visibility 1/(d+1) of a two-qudit isotropic state."""
    if d < 2:
        raise ContractError("d must be at least 2")
    return 1.0 / (d + 1)


@dataclass(frozen=True)
class Component:
    """One piece of a biseparable decomposition.

    ``split`` is the sorted tuple of parties on one side of the claimed
    bipartition, or ``None`` for a fully separable state.
    """

    weight: float
    state: TensorSum
    split: tuple[int, ...] | None
    label: str = ""


@dataclass(frozen=True)
class BiseparabilityCertificate:
    components: tuple[Component, ...]
    target: Topology
    p: float
    d: int
    builder: str

    def to_json(self) -> dict:
        return {
            "builder": self.builder,
            "p": self.p,
            "d": self.d,
            "target": self.target.to_json(),
            "components": [
                {
                    "label": c.label,
                    "weight": c.weight,
                    "split": "full" if c.split is None else list(c.split),
                    "state": tensor_sum_to_json(c.state),
                }
                for c in self.components
            ],
        }

    @classmethod
    def from_json(cls, obj) -> BiseparabilityCertificate:
        target = Topology.from_json(obj["target"])
        comps = []
        for c in obj["components"]:
            split = None if c["split"] == "full" else tuple(int(x) for x in c["split"])
            comps.append(Component(float(c["weight"]), tensor_sum_from_json(c["state"], target.n),
                                   split, c.get("label", "")))
        return cls(tuple(comps), target, float(obj["p"]), int(obj["d"]), obj["builder"])


def tensor_sum_to_json(s: TensorSum) -> dict:
    return {
        "edges": [list(e) for e in s.edges],
        "dims": [list(x) for x in s.dims],
        "terms": [
            {
                "weight": [float(w.real), float(w.imag)],
                "factors": [[[float(z.real), float(z.imag)] for z in f.ravel()] for f in factors],
            }
            for w, factors in s.terms
        ],
    }


def tensor_sum_from_json(obj, n_parties: int) -> TensorSum:
    edges = tuple(tuple(int(x) for x in e) for e in obj["edges"])
    dims = tuple(tuple(int(x) for x in dd) for dd in obj["dims"])
    terms = []
    for t in obj["terms"]:
        factors = []
        for flat, (da, db) in zip(t["factors"], dims):
            arr = np.array([complex(re, im) for re, im in flat]).reshape(da * db, da * db)
            factors.append(arr)
        terms.append((complex(*t["weight"]), tuple(factors)))
    return TensorSum(n_parties, edges, dims, tuple(terms))


# ---------------------------------------------------------------------------
# verification


@dataclass(frozen=True)
class FactorInfo:
    psd: bool
    product: bool
    visibility: float | None
    is_phi: bool
    is_noise: bool
    d: int

    @property
    def separable(self) -> bool:
        if not self.psd:
            return False
        if self.product:
            return True
        return self.visibility is not None and self.visibility <= 1 / (self.d + 1) + VISIBILITY_SLACK


def classify_factor(f: np.ndarray, dims: tuple[int, int]) -> FactorInfo:
    """Structural facts about one (unnormalized) edge factor."""
    da, db = dims
    tr = complex(np.trace(f)).real
    scale = max(float(np.max(np.abs(f))), 1e-300)
    psd = linalg.min_eigenvalue(f) >= -1e-10 * scale
    realigned = f.reshape(da, db, da, db).transpose(0, 2, 1, 3).reshape(da * da, db * db)
    sv = np.linalg.svd(realigned, compute_uv=False)
    product = bool(sv[0] > 0 and (len(sv) == 1 or sv[1] <= 1e-12 * sv[0]))
    visibility, is_phi, is_noise = None, False, False
    if da == db and tr > 0:
        d = da
        g = f / tr
        fid = complex(np.vdot(_phi_vec(d), g @ _phi_vec(d))).real
        v = (fid - 1 / d**2) / (1 - 1 / d**2)
        iso = v * phi_plus(d).data + (1 - v) * np.eye(d * d) / d**2
        if np.max(np.abs(g - iso)) <= 1e-12 and -1e-12 <= v <= 1 + 1e-12:
            visibility = min(max(v, 0.0), 1.0)
            is_phi = abs(v - 1) <= 1e-12
            is_noise = abs(v) <= 1e-12
    return FactorInfo(bool(psd), product, visibility, is_phi, is_noise, da)


def _phi_vec(d):
    v = np.zeros(d * d, dtype=np.complex128)
    v[:: d + 1] = 1 / math.sqrt(d)
    return v


class _FactorCache:
    def __init__(self):
        self._cache = {}

    def __call__(self, f, dims) -> FactorInfo:
        key = (dims, f.tobytes())
        info = self._cache.get(key)
        if info is None:
            info = classify_factor(f, dims)
            self._cache[key] = info
        return info


@dataclass(frozen=True)
class ComponentCheck:
    index: int
    label: str
    split: tuple[int, ...] | None
    separable: bool
    rule: str
    ppt_min_eigenvalue: float | None = None
    detail: str = ""


@dataclass(frozen=True)
class CertificateReport:
    weight_sum: float
    weights_ok: bool
    reconstruction_error: float
    reconstruction_method: str
    reconstruction_ok: bool
    components: tuple[ComponentCheck, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return self.weights_ok and self.reconstruction_ok and all(c.separable for c in self.components)

    def failures(self) -> list[str]:
        out = []
        if not self.weights_ok:
            out.append(f"weights sum to {self.weight_sum!r} or are negative")
        if not self.reconstruction_ok:
            out.append(f"reconstruction error {self.reconstruction_error:.3g} ({self.reconstruction_method})")
        out += [f"component {c.index} ({c.label}): {c.detail}" for c in self.components if not c.separable]
        return out


def _crossing(state: TensorSum, split) -> list[int]:
    if split is None:
        return list(range(len(state.edges)))
    side = set(split)
    return [k for k, (a, b) in enumerate(state.edges) if (a in side) != (b in side)]


def _term_rule(state: TensorSum, crossing, info) -> tuple[bool, str]:
    cross = set(crossing)
    for t, (w, factors) in enumerate(state.terms):
        eff = w * math.prod(complex(np.trace(f)) for f in factors)
        if abs(eff.imag) > 1e-12 or eff.real < -1e-15:
            return False, f"term {t} has weight {eff}"
        for k, (f, dims) in enumerate(zip(factors, state.dims)):
            fi = info(f, dims)
            if not fi.psd:
                return False, f"term {t} factor on {state.edges[k]} is not PSD"
            if k in cross and not fi.separable:
                return False, f"term {t} factor on crossing edge {state.edges[k]} is not certifiably separable"
    return True, ""


def _joint_isotropic_rule(state: TensorSum, crossing, info) -> tuple[bool, str]:
    if not crossing:
        return False, "no crossing edges"
    cross = set(crossing)
    w_phi = w_noise = 0.0
    reference = None
    for w, factors in state.terms:
        kinds = set()
        for k in crossing:
            fi = info(factors[k], state.dims[k])
            if state.dims[k][0] != state.dims[k][1]:
                return False, "joint rule needs square edge dimensions"
            kinds.add("phi" if fi.is_phi else "noise" if fi.is_noise else "other")
        if len(kinds) != 1 or "other" in kinds:
            return False, "crossing factors are not uniformly phi_plus or noise"
        eff = w * math.prod(complex(np.trace(f)) for f in factors)
        if abs(eff.imag) > 1e-12 or eff.real < -1e-15:
            return False, "negative term weight"
        rest = [factors[k] / np.trace(factors[k]) for k in range(len(factors)) if k not in cross]
        if reference is None:
            reference = rest
            for k, f in enumerate(factors):
                if k not in cross and not info(f, state.dims[k]).psd:
                    return False, f"factor on {state.edges[k]} is not PSD"
        elif any(np.max(np.abs(a - b)) > 1e-12 for a, b in zip(rest, reference)):
            return False, "non-crossing factors differ between terms"
        if kinds == {"phi"}:
            w_phi += eff.real
        else:
            w_noise += eff.real
    big_d = math.prod(state.dims[k][0] for k in crossing)
    total = w_phi + w_noise
    if total <= 0:
        return False, "component has zero trace"
    v = w_phi / total
    if v > 1 / (big_d + 1) + VISIBILITY_SLACK:
        return False, f"joint visibility {v:.6g} exceeds 1/({big_d}+1)"
    return True, ""


def _ppt_min_eig(state: TensorSum, split) -> float | None:
    if split is None or state.dense_dim > PPT_CHECK_DIM:
        return None
    dense = densify(state)
    regs = state.layout.registers_of(split)
    return linalg.min_eigenvalue(linalg.partial_transpose(dense, regs))


def check_component(index: int, comp: Component, target: Topology, info=None) -> ComponentCheck:
    info = info or _FactorCache()
    state, split = comp.state, comp.split
    if split is not None:
        if not split or len(split) >= target.n or any(not 0 <= q < target.n for q in split):
            return ComponentCheck(index, comp.label, split, False, "none", detail="split is not a proper bipartition")
    crossing = _crossing(state, split)
    ok, why = _term_rule(state, crossing, info)
    rule = "term"
    if not ok and split is not None:
        ok2, why2 = _joint_isotropic_rule(state, crossing, info)
        if ok2:
            ok, rule = True, "joint-isotropic"
        else:
            why = f"{why}; {why2}"
    ppt = None
    if ok:
        ppt = _ppt_min_eig(state, split)
        if ppt is not None and ppt < -linalg.CERT_PSD_TOL:
            ok, why = False, f"partial transpose has eigenvalue {ppt:.3g}"
    return ComponentCheck(index, comp.label, split, ok, rule if ok else "none", ppt, "" if ok else why)


def verify_certificate(c: BiseparabilityCertificate) -> CertificateReport:
    """Independently re-check weights, reconstruction and separability."""
    weights = [comp.weight for comp in c.components]
    wsum = float(math.fsum(weights))
    weights_ok = bool(weights) and abs(wsum - 1) <= WEIGHT_TOL and min(weights) >= 0
    target = pen_state(c.target)
    try:
        mix = weighted_sum([(comp.weight, comp.state) for comp in c.components])
        diff = mix - target
        if diff.dense_dim <= DENSE_CHECK_DIM:
            err = densify(mix).data - densify(target).data
            error, method = float(np.max(np.abs(err))), "dense max-entry"
        else:
            error, method = tensor_sum_norm(diff), "Hilbert-Schmidt bound"
    except ContractError as exc:
        error, method = math.inf, f"incompatible: {exc}"
    info = _FactorCache()
    checks = tuple(check_component(k, comp, c.target, info) for k, comp in enumerate(c.components))
    return CertificateReport(wsum, weights_ok, error, method, error <= RECONSTRUCTION_TOL, checks)


# ---------------------------------------------------------------------------
# builders


def _normalized(n, edges, dims, terms) -> tuple[float, TensorSum]:
    """(trace, state / trace) for a list of (weight, factor tuple) terms."""
    s = TensorSum(n, edges, dims, tuple(terms))
    tr = s.trace().real
    return tr, s.scale(1 / tr)


def _certificate(parts, target, p, d, builder) -> BiseparabilityCertificate:
    comps = tuple(Component(float(w), s, split, label) for w, s, split, label in parts if w > 0)
    return BiseparabilityCertificate(comps, target, float(p), int(d), builder)


def _check_p(p, d):
    if d < 2:
        raise ContractError("d must be at least 2")
    if not 0 <= p <= 1:
        raise ContractError(f"p must lie in [0, 1], got {p}")


def star3_bound(d: int) -> float:
    return ((1 + math.sqrt(2)) * d - 1) / (d * d + 2 * d - 1)


def decompose_star3(p: float, d: int = 2) -> BiseparabilityCertificate:
    """Biseparable decomposition of the three-party star (centre 0).

    Splits the all-phi_plus term between a joint isotropic piece across
    0|12 and two single-edge isotropic pieces; the free share ``q`` is the
    midpoint of its feasible interval.
    """
    _check_p(p, d)
    bound = star3_bound(d)
    target = Topology.star(3, EdgeStateSpec.iso(p, d))
    if p > bound + 1e-12:
        raise ThresholdError(f"p={p} exceeds the star bound {bound!r}", bound)
    edges, dims = target.edges, ((d, d), (d, d))
    phi, noise = phi_plus(d).data, maximally_mixed(d).data
    if p == 0:
        return _certificate([(1.0, TensorSum(3, edges, dims, ((1.0, (noise, noise)),)), None, "noise")],
                            target, p, d, "star3")
    lo = max(1 - (1 - p) ** 2 / (p * p * d * d), 0.0)
    hi = min((2 - 2 * p) / (p * d), 1.0)
    if lo > hi + 1e-12:
        raise ThresholdError(f"no feasible share at p={p}", bound)
    q = 0.5 * (lo + hi)
    w0, s0 = _normalized(3, edges, dims, [((1 - q) * p * p, (phi, phi)), ((1 - p) ** 2, (noise, noise))])
    side = q * p * p / 2 + p * (1 - p)
    iso_side = isotropic((q * p * p / 2) / side, d).data
    s1 = TensorSum(3, edges, dims, ((1.0, (phi, iso_side)),))
    s2 = TensorSum(3, edges, dims, ((1.0, (iso_side, phi)),))
    parts = [(w0, s0, (0,), "joint"), (side, s1, (2,), "edge 0-2"), (side, s2, (1,), "edge 0-1")]
    return _certificate(parts, target, p, d, "star3")


def triangle_bound(d: int) -> float:
    return 3 / (3 + 2 * d)


def decompose_triangle(p: float, d: int = 2) -> BiseparabilityCertificate:
    """Biseparable decomposition of the fully connected three-party network."""
    _check_p(p, d)
    bound = triangle_bound(d)
    target = Topology.complete(3, EdgeStateSpec.iso(p, d))
    if p > bound + 1e-12:
        raise ThresholdError(f"p={p} exceeds the triangle bound {bound!r}", bound)
    edges, dims = target.edges, ((d, d),) * 3
    phi, noise = phi_plus(d).data, maximally_mixed(d).data
    all_noise = TensorSum(3, edges, dims, ((1.0, (noise, noise, noise)),))
    if p == 0:
        return _certificate([(1.0, all_noise, None, "noise")], target, p, d, "triangle")
    denom = 3 - 3 * p + p * p
    c1 = (3 - p) ** 2 / (4 * denom)
    c2 = 3 * (1 - p) ** 2 / (4 * denom)
    inner = isotropic(min(2 * p / (3 - p), 1.0), d).data
    w = p * (p * p - 3 * p + 3) / 3
    # the pair of edges through the lone party carries the isotropic product
    s1 = TensorSum(3, edges, dims, ((c1, (inner, inner, phi)), (c2, (noise, noise, phi))))
    s2 = TensorSum(3, edges, dims, ((c1, (inner, phi, inner)), (c2, (noise, phi, noise))))
    s3 = TensorSum(3, edges, dims, ((c1, (phi, inner, inner)), (c2, (phi, noise, noise))))
    parts = [(w, s1, (0,), "party 0"), (w, s2, (1,), "party 1"), (w, s3, (2,), "party 2"),
             ((1 - p) ** 3, all_noise, None, "noise")]
    return _certificate(parts, target, p, d, "triangle")


def tree_min_edges(p: float, d: int) -> int:
    """Smallest edge count for which the tree construction applies."""
    if p >= 1:
        raise ThresholdError("no edge count suffices at p=1", math.inf)
    return max(math.ceil(d * p / (1 - p) - 1e-9), 1)


def _cut_side(t: Topology, edge) -> tuple[int, ...]:
    """Side of the tree cut at ``edge`` that does not contain party 0."""
    rest = [e for e in t.edges if e != edge]
    comps = t.components(rest)
    for comp in comps:
        if edge[0] in comp or edge[1] in comp:
            if 0 not in comp:
                return tuple(comp)
    raise ContractError(f"edge {edge} does not cut the tree")


def decompose_tree(t: Topology, p: float, d: int = 2) -> BiseparabilityCertificate:
    """Biseparable decomposition of an isotropic tree network.

    The all-phi_plus term is shared equally among the single-noise terms,
    leaving an isotropic state on one edge per component; every term with
    two or more noisy edges is grouped by its two lowest noisy edges and is
    separable across the cut of the first.
    """
    _check_p(p, d)
    if not t.is_tree():
        raise ContractError("decompose_tree needs a connected acyclic topology")
    t = t.with_isotropic(p, d)
    m = len(t.edges)
    if p >= 1 or m < d * p / (1 - p) - 1e-9:
        need = tree_min_edges(p, d) if p < 1 else math.inf
        raise ThresholdError(f"tree with {m} edges is too small at p={p}; needs at least {need}", need)
    edges, dims = t.edges, ((d, d),) * m
    phi, noise, rho = phi_plus(d).data, maximally_mixed(d).data, isotropic(p, d).data
    if p == 0:
        s = TensorSum(t.n, edges, dims, ((1.0, (noise,) * m),))
        return _certificate([(1.0, s, None, "noise")], t, p, d, "tree")
    parts = []
    v = (p / m) / (p / m + 1 - p)
    iso_v = isotropic(v, d).data
    cuts = {e: _cut_side(t, e) for e in edges}
    for k, e in enumerate(edges):
        factors = tuple(iso_v if j == k else phi for j in range(m))
        parts.append((p ** (m - 1) * (p / m + 1 - p), TensorSum(t.n, edges, dims, ((1.0, factors),)),
                      cuts[e], f"edge {e}"))
    if p < 1:
        for tt in range(1, m):
            for k in range(tt):
                factors = tuple(noise if j in (k, tt) else phi if j < tt else rho for j in range(m))
                parts.append((p ** (tt - 1) * (1 - p) ** 2, TensorSum(t.n, edges, dims, ((1.0, factors),)),
                              cuts[edges[k]], f"noise {edges[k]} {edges[tt]}"))
    return _certificate(parts, t, p, d, "tree")


def cycle_feasible(n: int, p: float, d: int) -> bool:
    """Whether both cycle fragments are separable for this n."""
    if n <= 4:
        return False
    if p == 0:
        return True
    if p >= 1:
        return False
    need = d * d * p * p / (1 - p) ** 2
    return n - 4 >= need * (1 - 1e-12)


def cycle_min_n(p: float, d: int, n_max: int = 1 << 20) -> int:
    """Smallest n > 4 passing :func:`cycle_feasible`, by direct scan."""
    if p >= 1:
        raise ThresholdError("no cycle length suffices at p=1", math.inf)
    n = 5
    while not cycle_feasible(n, p, d):
        n += 1
        if n > n_max:
            raise ThresholdError(f"no feasible cycle length up to {n_max}", math.inf)
    return n


def decompose_cycle(n: int, p: float, d: int = 2) -> BiseparabilityCertificate:
    """Biseparable decomposition of the isotropic n-cycle.

    Edge k joins parties k and k+1 (mod n).  The all-phi_plus term is shared
    among the n consecutive noisy pairs; each single-noise term is shared
    among the triples made of that edge and a non-adjacent consecutive pair.
    Every other term has at least two noisy edges and is separable across
    the arc between its two lowest noisy edges.
    """
    _check_p(p, d)
    if n < 3:
        raise ContractError("a cycle needs at least 3 parties")
    target = Topology.cycle(n, EdgeStateSpec.iso(p, d))
    edges, dims = target.edges, ((d, d),) * n
    phi, noise, rho = phi_plus(d).data, maximally_mixed(d).data, isotropic(p, d).data
    if p == 0:
        s = TensorSum(n, edges, dims, ((1.0, (noise,) * n),))
        return _certificate([(1.0, s, None, "noise")], target, p, d, "cycle")
    if not cycle_feasible(n, p, d):
        need = cycle_min_n(p, d)
        raise ThresholdError(f"cycle of {n} parties is too small at p={p}; minimal n is {need}", need)
    count = n + n * (n - 4) + math.comb(n, 2) + math.comb(n, 3) + math.comb(n, 4)
    if count > COMPONENT_CAP:
        from .errors import CapacityError

        raise CapacityError(f"cycle certificate would hold about {count} components")
    # position in sorted edge order of cycle edge k = (k, k+1 mod n)
    pos = {k: edges.index((min(k, (k + 1) % n), max(k, (k + 1) % n))) for k in range(n)}

    def factors(noisy, pair=None, fill=phi):
        out = [fill] * n
        for k in noisy:
            out[pos[k]] = noise
        if pair is not None:
            for k in pair:
                out[pos[k]] = pair[k]
        return tuple(out)

    def arc(a, b):
        return tuple(sorted(range(a + 1, b + 1)))

    parts = []
    claimed = set()
    # fragment 1: consecutive noisy pair (i, i+1) with a share of the all-phi_plus term
    for i in range(n):
        j = (i + 1) % n
        claimed.add(frozenset((i, j)))
        w, s = _normalized(n, edges, dims, [(p * p / n, factors(())), ((1 - p) ** 2, factors((i, j)))])
        parts.append((p ** (n - 2) * w, s, ((i + 1) % n,), f"pair {i}"))
    # fragment 2: single noisy edge i with non-adjacent consecutive pairs (j, j+1)
    for i in range(n):
        js = [j for j in range(n) if j not in {i, (i + 1) % n, (i - 1) % n, (i - 2) % n}]
        for j in js:
            jj = (j + 1) % n
            claimed.add(frozenset((i, j, jj)))
            w, s = _normalized(n, edges, dims, [(p * p / (n - 4), factors((i,))),
                                                ((1 - p) ** 2, factors((i, j, jj)))])
            parts.append((p ** (n - 3) * (1 - p) * w, s, ((j + 1) % n,), f"single {i} pair {j}"))
    # remainder: exactly two or three noisy edges not yet claimed
    for size in (2, 3):
        for combo in itertools.combinations(range(n), size):
            if frozenset(combo) in claimed:
                continue
            a, b = combo[0], combo[1]
            s = TensorSum(n, edges, dims, ((1.0, factors(combo)),))
            parts.append((p ** (n - size) * (1 - p) ** size, s, arc(a, b), f"noise {combo}"))
    # four or more noisy edges, grouped by the four lowest
    for combo in itertools.combinations(range(n), 4):
        last = combo[3]
        f = list(factors(combo))
        for k in range(last + 1, n):
            f[pos[k]] = rho
        s = TensorSum(n, edges, dims, ((1.0, tuple(f)),))
        weight = p ** (last + 1 - 4) * (1 - p) ** 4
        parts.append((weight, s, arc(combo[0], combo[1]), f"noise {combo}+"))
    return _certificate(parts, target, p, d, "cycle")
