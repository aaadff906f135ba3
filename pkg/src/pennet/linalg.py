"""Dense complex linear algebra with register (tensor-factor) bookkeeping.

Every :class:`ComplexMatrix` carries a ``layout``: the ordered list of
register dimensions whose product is the matrix dimension.  Partial
operations address registers by their position in that list.
"""

from __future__ import annotations

import math
from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ContractError

#: Largest dense dimension any operation may produce.  Module-level so
#: callers (and tests) can lower or raise it.
DIM_CAP = 1 << 16

HERMITIAN_TOL = 1e-10
PSD_TOL = 1e-9
#: Looser tolerance for re-checking states assembled from many terms.
CERT_PSD_TOL = 1e-7


def check_capacity(dim: int, what: str = "matrix") -> None:
    if dim > DIM_CAP:
        raise CapacityError(f"{what} of dimension {dim} exceeds the dense cap {DIM_CAP}")


@dataclass(frozen=True, eq=False)
class ComplexMatrix:
    """Immutable square complex matrix with an explicit register layout."""

    data: np.ndarray
    layout: tuple[int, ...] = ()

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.complex128)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ContractError(f"expected a square matrix, got shape {arr.shape}")
        layout = tuple(int(x) for x in self.layout) or (arr.shape[0],)
        if any(x < 1 for x in layout) or math.prod(layout) != arr.shape[0]:
            raise ContractError(f"layout {layout} does not factor dimension {arr.shape[0]}")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "layout", layout)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def trace(self) -> complex:
        return complex(np.trace(self.data))

    def dagger(self) -> ComplexMatrix:
        return ComplexMatrix(self.data.conj().T, self.layout)

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.data - self.data.conj().T), initial=0.0))

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return self.hermiticity_error() <= tol

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.data), initial=0.0))

    def with_layout(self, layout) -> ComplexMatrix:
        return ComplexMatrix(self.data, tuple(layout))

    def _coerce(self, other) -> np.ndarray:
        if isinstance(other, ComplexMatrix):
            if other.dim != self.dim:
                raise ContractError(f"dimension mismatch {self.dim} vs {other.dim}")
            return other.data
        return np.asarray(other)

    def __add__(self, other):
        return ComplexMatrix(self.data + self._coerce(other), self.layout)

    def __sub__(self, other):
        return ComplexMatrix(self.data - self._coerce(other), self.layout)

    def __neg__(self):
        return ComplexMatrix(-self.data, self.layout)

    def __mul__(self, scalar):
        return ComplexMatrix(self.data * complex(scalar), self.layout)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return ComplexMatrix(self.data / complex(scalar), self.layout)

    def __matmul__(self, other):
        return ComplexMatrix(self.data @ self._coerce(other), self.layout)

    def __repr__(self):
        return f"ComplexMatrix(dim={self.dim}, layout={self.layout})"


def as_matrix(m, layout=None) -> ComplexMatrix:
    if isinstance(m, ComplexMatrix):
        return m if layout is None else m.with_layout(layout)
    return ComplexMatrix(np.asarray(m), tuple(layout or ()))


def identity(layout) -> ComplexMatrix:
    if isinstance(layout, int):
        layout = (layout,)
    dim = math.prod(layout)
    check_capacity(dim)
    return ComplexMatrix(np.eye(dim), tuple(layout))


def projector(psi, layout=None) -> ComplexMatrix:
    """Rank-one projector onto a (normalized) vector."""
    psi = np.asarray(psi, dtype=np.complex128).ravel()
    return ComplexMatrix(np.outer(psi, psi.conj()), tuple(layout or ()))


def kron(a: ComplexMatrix, b: ComplexMatrix) -> ComplexMatrix:
    a, b = as_matrix(a), as_matrix(b)
    check_capacity(a.dim * b.dim, "Kronecker product")
    return ComplexMatrix(np.kron(a.data, b.data), a.layout + b.layout)


def kron_all(mats: Iterable[ComplexMatrix]) -> ComplexMatrix:
    mats = [as_matrix(m) for m in mats]
    if not mats:
        return ComplexMatrix(np.ones((1, 1)), (1,))
    out = mats[0]
    for m in mats[1:]:
        out = kron(out, m)
    return out


def _validate_registers(layout, regs, allow_empty=False) -> list[int]:
    regs = sorted({int(r) for r in regs})
    if not regs and not allow_empty:
        raise ContractError("register subset must be nonempty")
    for r in regs:
        if not 0 <= r < len(layout):
            raise ContractError(f"register index {r} out of range for layout {layout}")
    return regs


def partial_transpose(m: ComplexMatrix, regs) -> ComplexMatrix:
    """Transpose only the listed registers."""
    m = as_matrix(m)
    regs = _validate_registers(m.layout, regs)
    k = len(m.layout)
    t = m.data.reshape(m.layout + m.layout)
    axes = list(range(2 * k))
    for r in regs:
        axes[r], axes[r + k] = axes[r + k], axes[r]
    return ComplexMatrix(t.transpose(axes).reshape(m.dim, m.dim), m.layout)


def partial_trace(m: ComplexMatrix, regs) -> ComplexMatrix:
    """Trace out the listed registers.

    Tracing every register gives a 1x1 matrix holding the trace.
    """
    m = as_matrix(m)
    regs = _validate_registers(m.layout, regs)
    k = len(m.layout)
    t = m.data.reshape(m.layout + m.layout)
    keep = [i for i in range(k) if i not in regs]
    current = k
    for r in reversed(regs):
        t = np.trace(t, axis1=r, axis2=r + current)
        current -= 1
    new_layout = tuple(m.layout[i] for i in keep)
    dim = math.prod(new_layout)
    return ComplexMatrix(t.reshape(dim, dim), new_layout or (1,))


def permute_registers(m: ComplexMatrix, order) -> ComplexMatrix:
    """Reorder registers so that new register ``i`` is old register ``order[i]``."""
    m = as_matrix(m)
    order = list(order)
    if sorted(order) != list(range(len(m.layout))):
        raise ContractError(f"{order} is not a permutation of the registers")
    k = len(m.layout)
    t = m.data.reshape(m.layout + m.layout)
    t = t.transpose(order + [k + i for i in order])
    return ComplexMatrix(t.reshape(m.dim, m.dim), tuple(m.layout[i] for i in order))


def jacobi_eigh(a, tol: float = 1e-12, max_sweeps: int = 100):
    """Cyclic Jacobi eigensolver for a complex Hermitian matrix.

    Each rotation first removes the phase of the pivot element and then
    applies the classical real Jacobi rotation.  Iteration stops once the
    off-diagonal Frobenius norm drops below ``tol`` times the matrix norm.

    Returns
    -------
    eigenvalues : ndarray
        Real, sorted ascending.
    eigenvectors : ndarray
        Columns are the matching orthonormal eigenvectors.
    """
    a = np.array(a, dtype=np.complex128)
    n = a.shape[0]
    v = np.eye(n, dtype=np.complex128)
    scale = max(np.linalg.norm(a), 1e-300)
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                mag = abs(apq)
                if mag <= 1e-300:
                    continue
                phase = apq / mag
                theta = (a[q, q].real - a[p, p].real) / (2.0 * mag)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.array([[c, s], [-s * phase.conjugate(), c * phase.conjugate()]])
                idx = [p, q]
                a[:, idx] = a[:, idx] @ rot
                a[idx, :] = rot.conj().T @ a[idx, :]
                a[p, q] = a[q, p] = 0.0
                v[:, idx] = v[:, idx] @ rot
    else:
        raise ContractError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
    w = np.diag(a).real.copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def eig_hermitian(m, method: str = "lapack"):
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending.

    ``method="jacobi"`` uses :func:`jacobi_eigh`; the default calls LAPACK.
    """
    m = as_matrix(m)
    if m.hermiticity_error() > HERMITIAN_TOL * max(1.0, m.max_abs()):
        raise ContractError(f"matrix is not Hermitian (error {m.hermiticity_error():.3g})")
    h = 0.5 * (m.data + m.data.conj().T)
    if method == "jacobi":
        return jacobi_eigh(h)
    if method != "lapack":
        raise ValueError(f"unknown eigen method {method!r}")
    w, v = np.linalg.eigh(h)
    return w, v


def eigvalsh(m) -> np.ndarray:
    m = as_matrix(m)
    if m.hermiticity_error() > HERMITIAN_TOL * max(1.0, m.max_abs()):
        raise ContractError(f"matrix is not Hermitian (error {m.hermiticity_error():.3g})")
    return np.linalg.eigvalsh(0.5 * (m.data + m.data.conj().T))


def min_eigenvalue(m) -> float:
    return float(eigvalsh(m)[0])


def is_psd(m, tol: float = PSD_TOL) -> bool:
    return min_eigenvalue(m) >= -tol


def von_neumann_entropy(m, tol: float = PSD_TOL) -> float:
    """Entropy in bits, with 0 log 0 = 0."""
    m = as_matrix(m)
    if abs(m.trace() - 1) > 1e-10:
        raise ContractError(f"entropy needs a unit-trace state, trace is {m.trace():.12g}")
    w = eigvalsh(m)
    if w[0] < -tol:
        raise ContractError(f"state has negative eigenvalue {w[0]:.3g}")
    w = w[w > 0]
    return float(max(-np.sum(w * np.log2(w)), 0.0))


def fidelity_with_pure(rho, psi) -> float:
    """Overlap <psi|rho|psi>, the fidelity with a pure state."""
    rho = as_matrix(rho)
    psi = np.asarray(psi, dtype=np.complex128).ravel()
    if psi.shape[0] != rho.dim:
        raise ContractError(f"vector of length {psi.shape[0]} vs matrix dimension {rho.dim}")
    if abs(np.linalg.norm(psi) - 1) > 1e-10:
        raise ContractError("pure state vector is not normalized")
    f = float(np.real(psi.conj() @ rho.data @ psi))
    return min(max(f, 0.0), 1.0)
