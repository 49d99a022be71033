"""Dense complex linear algebra kernel for qubit registers.

Conventions used throughout the package:

* qubit 0 is the most significant tensor factor (leftmost ket position),
* all matrices are complex128, row-major,
* the global comparison tolerance is ``TOL = 1e-9`` (absolute).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionError,
    DomainError,
    NumericalIntegrityError,
    ParseError,
    QubitIndexError,
)

TOL = 1e-9

# Small fixed gates, exact dyadic entries where possible.
I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0)
SWAP2 = np.array(
    [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
)
CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)


def _as_matrix(m) -> np.ndarray:
    a = np.asarray(getattr(m, "mat", m), dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    return a


def num_qubits(dim: int) -> int:
    q = int(dim).bit_length() - 1
    if dim <= 0 or (1 << q) != dim:
        raise DimensionError(f"dimension {dim} is not a power of two")
    return q


def is_hermitian(a: np.ndarray, tol: float = TOL) -> bool:
    return bool(np.max(np.abs(a - a.conj().T)) <= tol)


def is_unitary(a: np.ndarray, tol: float = TOL) -> bool:
    d = a.shape[0]
    return bool(np.max(np.abs(a.conj().T @ a - np.eye(d))) <= tol)


def is_projector(a: np.ndarray, tol: float = TOL) -> bool:
    return is_hermitian(a, tol) and bool(np.max(np.abs(a @ a - a)) <= tol)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """PSD trace-one operator on a power-of-two dimensional space.

    Construction checks hermiticity and trace (cheap); the PSD check is
    O(d^3) and exposed separately for tests via :meth:`assert_psd`.
    """

    mat: np.ndarray

    def __post_init__(self):
        a = _as_matrix(self.mat)
        num_qubits(a.shape[0])
        if not is_hermitian(a):
            raise NumericalIntegrityError("density matrix is not Hermitian within 1e-9")
        if abs(np.trace(a) - 1.0) > TOL:
            raise NumericalIntegrityError("density matrix trace differs from 1 by > 1e-9")
        a.setflags(write=False)
        object.__setattr__(self, "mat", a)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    @property
    def qubits(self) -> int:
        return num_qubits(self.dim)

    def assert_psd(self, tol: float = TOL) -> None:
        w = np.linalg.eigvalsh(self.mat)
        if w.min() < -tol:
            raise NumericalIntegrityError(f"minimum eigenvalue {w.min():.3e} < -{tol}")


@dataclass(frozen=True, eq=False)
class UnitaryMatrix:
    mat: np.ndarray

    def __post_init__(self):
        a = _as_matrix(self.mat)
        num_qubits(a.shape[0])
        if not is_unitary(a):
            raise NumericalIntegrityError("matrix is not unitary within 1e-9")
        a.setflags(write=False)
        object.__setattr__(self, "mat", a)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    @property
    def qubits(self) -> int:
        return num_qubits(self.dim)


@dataclass(frozen=True, eq=False)
class Projector:
    mat: np.ndarray

    def __post_init__(self):
        a = _as_matrix(self.mat)
        num_qubits(a.shape[0])
        if not is_projector(a):
            raise NumericalIntegrityError("matrix is not a projector (P=P†, P²=P) within 1e-9")
        a.setflags(write=False)
        object.__setattr__(self, "mat", a)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]


def tensor(a, b) -> np.ndarray:
    """Kronecker product; the left operand occupies the most significant qubits."""
    am, bm = _as_matrix(a), _as_matrix(b)
    num_qubits(am.shape[0])
    num_qubits(bm.shape[0])
    return np.kron(am, bm)


def tensor_all(mats) -> np.ndarray:
    out = None
    for m in mats:
        out = _as_matrix(m) if out is None else tensor(out, m)
    if out is None:
        return np.eye(1, dtype=complex)
    return out


def _check_targets(targets, q: int) -> tuple[int, ...]:
    ts = tuple(int(t) for t in targets)
    if len(set(ts)) != len(ts):
        raise QubitIndexError(f"repeated target in {ts}")
    for t in ts:
        if not 0 <= t < q:
            raise QubitIndexError(f"qubit index {t} out of range for {q} qubits")
    return ts


def _contract(tensor_arr: np.ndarray, u: np.ndarray, axes: tuple[int, ...]) -> np.ndarray:
    """Contract u (2^s x 2^s) into the given row axes of a (2,)* tensor."""
    s = len(axes)
    ut = u.reshape((2,) * (2 * s))
    out = np.tensordot(ut, tensor_arr, axes=(tuple(range(s, 2 * s)), axes))
    return np.moveaxis(out, tuple(range(s)), axes)


def apply_to_vector(psi: np.ndarray, u, targets) -> np.ndarray:
    """Apply a local unitary to a state vector on the given (ordered) qubits."""
    um = _as_matrix(u)
    q = num_qubits(psi.shape[0])
    ts = _check_targets(targets, q)
    if um.shape[0] != 1 << len(ts):
        raise DimensionError(f"unitary dim {um.shape[0]} != 2^{len(ts)}")
    out = _contract(psi.reshape((2,) * q), um, ts)
    return out.reshape(-1)


def apply_on_subset(rho, u, targets) -> np.ndarray:
    """Return (U_embedded) rho (U_embedded)^dagger.

    ``targets`` is an ordered qubit list; the unitary's tensor factors
    follow that order, so e.g. targets (2, 0) puts the unitary's most
    significant factor on qubit 2.
    """
    rm, um = _as_matrix(rho), _as_matrix(u)
    q = num_qubits(rm.shape[0])
    ts = _check_targets(targets, q)
    if um.shape[0] != 1 << len(ts):
        raise DimensionError(f"unitary dim {um.shape[0]} != 2^{len(ts)}")
    t = rm.reshape((2,) * (2 * q))
    t = _contract(t, um, ts)
    t = _contract(t, um.conj(), tuple(q + i for i in ts))
    return t.reshape(rm.shape)


def embed_operator(m, targets, q: int) -> np.ndarray:
    """Dense 2^q x 2^q embedding of a local operator (identity elsewhere)."""
    um = _as_matrix(m)
    ts = _check_targets(targets, q)
    if um.shape[0] != 1 << len(ts):
        raise DimensionError(f"operator dim {um.shape[0]} != 2^{len(ts)}")
    eye = np.eye(1 << q, dtype=complex).reshape((2,) * q + (1 << q,))
    out = _contract(eye, um, ts)
    return out.reshape(1 << q, 1 << q)


embed_unitary = embed_operator


def partial_trace(rho, keep) -> np.ndarray:
    """Trace out all qubits not in ``keep``; kept qubits stay in ascending order."""
    rm = _as_matrix(rho)
    q = num_qubits(rm.shape[0])
    ks = sorted(_check_targets(keep, q))
    drop = [i for i in range(q) if i not in ks]
    t = rm.reshape((2,) * (2 * q))
    for i in reversed(drop):
        t = np.trace(t, axis1=i, axis2=i + (t.ndim // 2))
    d = 1 << len(ks)
    return t.reshape(d, d)


def accept_probability(rho, p) -> float:
    """Tr(P rho), checked real within 1e-6 and clamped into [0, 1]."""
    rm, pm = _as_matrix(rho), _as_matrix(p)
    if rm.shape != pm.shape:
        raise DimensionError(f"projector dim {pm.shape[0]} != state dim {rm.shape[0]}")
    val = complex(np.einsum("ij,ji->", pm, rm))
    if abs(val.imag) > 1e-6:
        raise NumericalIntegrityError(f"acceptance has imaginary part {val.imag:.3e}")
    r = val.real
    if r < -1e-6 or r > 1 + 1e-6:
        raise NumericalIntegrityError(f"acceptance {r!r} outside [0,1] beyond tolerance")
    return float(min(max(r, 0.0), 1.0))


def basis_projector(bit: int) -> np.ndarray:
    return np.array([[1.0 - bit, 0], [0, float(bit)]], dtype=complex)


def haar_orthogonal(n: int, special: bool = False, seed=None) -> np.ndarray:
    """Haar-random orthogonal matrix via Gaussian QR with sign correction.

    The diagonal of R is forced positive (Mezzadri), which makes the QR
    output Haar-distributed on O(n). With ``special`` the last column is
    flipped when det = -1, giving SO(n).
    """
    if n < 1:
        raise DomainError(f"dimension must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n))
    q, r = np.linalg.qr(a)
    d = np.diag(r)
    q = q * np.where(d < 0, -1.0, 1.0)
    if special and np.linalg.det(q) < 0:
        q[:, -1] = -q[:, -1]
    return q


def haar_unitary(n: int, seed=None) -> np.ndarray:
    """Haar-random unitary: complex Ginibre matrix, QR, phase correction."""
    if n < 1:
        raise DomainError(f"dimension must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(a)
    d = np.diag(r)
    return q * (d / np.abs(d))


def haar_unit_vector(n: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


def random_projector(q: int, rank: int, seed=None) -> np.ndarray:
    """Random rank-r projector on q qubits (Haar-rotated diagonal)."""
    d = 1 << q
    if not 0 <= rank <= d:
        raise DomainError(f"rank {rank} outside [0, {d}]")
    u = haar_unitary(d, seed)
    diag = np.zeros(d)
    diag[:rank] = 1.0
    return (u * diag) @ u.conj().T


# Matrix exchange format: {"dim": n, "entries": [[[re, im], ...], ...]},
# row-major, shortest-repr decimals (bit-exact float round trip).

def matrix_to_json(m) -> str:
    a = _as_matrix(m)
    entries = [[[float(v.real), float(v.imag)] for v in row] for row in a]
    return json.dumps({"dim": a.shape[0], "entries": entries})


def matrix_from_json(text: str) -> np.ndarray:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"bad matrix text: {e}") from e
    return matrix_from_obj(obj)


def matrix_to_obj(m) -> dict:
    a = _as_matrix(m)
    return {
        "dim": a.shape[0],
        "entries": [[[float(v.real), float(v.imag)] for v in row] for row in a],
    }


def matrix_from_obj(obj) -> np.ndarray:
    if not isinstance(obj, dict) or "dim" not in obj or "entries" not in obj:
        raise ParseError("matrix object must carry 'dim' and 'entries'")
    dim = obj["dim"]
    rows = obj["entries"]
    if len(rows) != dim or any(len(r) != dim for r in rows):
        raise ParseError(f"matrix entries do not form a {dim}x{dim} grid")
    a = np.empty((dim, dim), dtype=complex)
    for i, row in enumerate(rows):
        for j, (re, im) in enumerate(row):
            a[i, j] = complex(re, im)
    return a
