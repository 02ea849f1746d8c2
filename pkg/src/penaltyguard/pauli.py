"""Qubit-register operator algebra.

Basis convention: qubit 0 of a register is the most significant bit of the
computational-basis index, so for a register ``(q0, q1)`` the basis state
``|q0 q1>`` has index ``2*q0 + q1``.  ``np.kron(A0, A1)`` therefore equals the
embedded operator ``A0 (x) A1``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ContractError

logger = logging.getLogger(__name__)

PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# (a, b) -> (phase, c) with sigma_a sigma_b = phase * sigma_c
_PRODUCT_TABLE: dict[tuple[str, str], tuple[complex, str]] = {}
for _p in "IXYZ":
    _PRODUCT_TABLE[("I", _p)] = (1, _p)
    _PRODUCT_TABLE[(_p, "I")] = (1, _p)
    _PRODUCT_TABLE[(_p, _p)] = (1, "I")
for _a, _b, _c in (("X", "Y", "Z"), ("Y", "Z", "X"), ("Z", "X", "Y")):
    _PRODUCT_TABLE[(_a, _b)] = (1j, _c)
    _PRODUCT_TABLE[(_b, _a)] = (-1j, _c)

HERMITICITY_ATOL = 1e-12
DENSE_NORM_LIMIT = 4096


@dataclass(frozen=True)
class QubitRegister:
    """Ordered qubit labels, system-physical qubits first, then environment."""

    system: tuple[Hashable, ...]
    environment: tuple[Hashable, ...] = ()
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "system", tuple(self.system))
        object.__setattr__(self, "environment", tuple(self.environment))
        labels = self.system + self.environment
        if len(set(labels)) != len(labels):
            raise ContractError(f"duplicate qubit labels in register: {labels}")
        object.__setattr__(self, "_index", {lab: i for i, lab in enumerate(labels)})

    @classmethod
    def build(cls, n_system: int, n_environment: int = 0) -> "QubitRegister":
        """Register with labels ``s0..`` for system and ``e0..`` for environment qubits."""
        return cls(
            tuple(f"s{i}" for i in range(n_system)),
            tuple(f"e{i}" for i in range(n_environment)),
        )

    @property
    def labels(self) -> tuple:
        return self.system + self.environment

    @property
    def n_total(self) -> int:
        return len(self.system) + len(self.environment)

    @property
    def n_system(self) -> int:
        return len(self.system)

    @property
    def n_environment(self) -> int:
        return len(self.environment)

    @property
    def dim(self) -> int:
        return 2**self.n_total

    @property
    def system_dim(self) -> int:
        return 2**self.n_system

    @property
    def env_dim(self) -> int:
        return 2**self.n_environment

    def index(self, label) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise ContractError(f"unknown qubit label {label!r}") from None


@dataclass(frozen=True)
class PauliString:
    """``coefficient * prod_q sigma_q`` over labelled qubits; absent labels are identity.

    ``factors`` is normalised to a sorted tuple of ``(label, "X"|"Y"|"Z")`` pairs.
    """

    coefficient: complex = 1.0
    factors: tuple = ()

    def __post_init__(self):
        items = self.factors.items() if isinstance(self.factors, Mapping) else self.factors
        clean = {}
        for label, op in items:
            if op not in PAULI_MATRICES:
                raise ContractError(f"unknown Pauli factor {op!r} on qubit {label!r}")
            if label in clean:
                raise ContractError(f"qubit {label!r} appears twice")
            if op != "I":
                clean[label] = op
        object.__setattr__(self, "factors", tuple(sorted(clean.items(), key=lambda kv: str(kv[0]))))
        object.__setattr__(self, "coefficient", complex(self.coefficient))

    @classmethod
    def from_label(cls, label: str, qubits: Sequence, coefficient: complex = 1.0) -> "PauliString":
        """``from_label("YIYI", ["s0", "s1", "s2", "s3"])``; one character per qubit."""
        if len(label) != len(qubits):
            raise ContractError(f"label {label!r} does not match {len(qubits)} qubits")
        return cls(coefficient, tuple(zip(qubits, label.upper())))

    @property
    def support(self) -> tuple:
        return tuple(lab for lab, _ in self.factors)

    def weight(self, within: Iterable | None = None) -> int:
        if within is None:
            return len(self.factors)
        within = set(within)
        return sum(1 for lab, _ in self.factors if lab in within)

    def __mul__(self, other):
        if isinstance(other, PauliString):
            ops = dict(self.factors)
            coeff = self.coefficient * other.coefficient
            for label, op in other.factors:
                phase, res = _PRODUCT_TABLE[(ops.get(label, "I"), op)]
                coeff *= phase
                ops[label] = res
            return PauliString(coeff, ops)
        if np.isscalar(other):
            return PauliString(self.coefficient * other, self.factors)
        return NotImplemented

    def __rmul__(self, other):
        if np.isscalar(other):
            return PauliString(self.coefficient * other, self.factors)
        return NotImplemented

    def __neg__(self):
        return PauliString(-self.coefficient, self.factors)

    def __str__(self):
        body = " ".join(f"{op}[{lab}]" for lab, op in self.factors) or "I"
        return f"({self.coefficient:g}) {body}"


def dot_sigma(vector: Sequence[float], label) -> list[PauliString]:
    """``n_x X + n_y Y + n_z Z`` on one qubit, as a list of Pauli strings."""
    return [PauliString(float(c), ((label, op),)) for c, op in zip(vector, "XYZ") if c != 0.0]


def multiply_sums(a: Sequence[PauliString], b: Sequence[PauliString]) -> list[PauliString]:
    return [x * y for x in a for y in b]


class HermitianOperator:
    """Sparse complex operator on a full register.

    With ``hermitian=True`` the matrix is checked against its conjugate
    transpose (elementwise, ``atol``) on construction.  Operators built by
    :func:`commutator` and general products carry ``hermitian=False``.
    The stored matrix is read-only.
    """

    __slots__ = ("matrix", "hermitian")

    def __init__(self, matrix, hermitian: bool = True, atol: float = HERMITICITY_ATOL):
        m = sp.csr_matrix(matrix, dtype=complex)
        if m.shape[0] != m.shape[1]:
            raise ContractError(f"operator must be square, got {m.shape}")
        dim = m.shape[0]
        if dim & (dim - 1):
            raise ContractError(f"operator dimension {dim} is not a power of two")
        m.sum_duplicates()
        if hermitian:
            resid = abs(m - m.conj().T)
            worst = resid.max() if resid.nnz else 0.0
            if worst > atol:
                raise ContractError(f"operator flagged Hermitian but |A - A^H|_max = {worst:.3e}")
        m.data.flags.writeable = False
        self.matrix = m
        self.hermitian = bool(hermitian)

    @classmethod
    def zeros(cls, dim: int) -> "HermitianOperator":
        return cls(sp.csr_matrix((dim, dim), dtype=complex))

    @classmethod
    def identity(cls, dim: int) -> "HermitianOperator":
        return cls(sp.identity(dim, dtype=complex, format="csr"))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_qubits(self) -> int:
        return self.dim.bit_length() - 1

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def dagger(self) -> "HermitianOperator":
        return HermitianOperator(self.matrix.conj().T, hermitian=self.hermitian)

    def trace(self) -> complex:
        return complex(self.matrix.diagonal().sum())

    def _check_dim(self, other: "HermitianOperator"):
        if self.dim != other.dim:
            raise ContractError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def __add__(self, other):
        if not isinstance(other, HermitianOperator):
            return NotImplemented
        self._check_dim(other)
        return HermitianOperator(self.matrix + other.matrix, self.hermitian and other.hermitian)

    def __sub__(self, other):
        if not isinstance(other, HermitianOperator):
            return NotImplemented
        self._check_dim(other)
        return HermitianOperator(self.matrix - other.matrix, self.hermitian and other.hermitian)

    def __neg__(self):
        return HermitianOperator(-self.matrix, self.hermitian)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        keep = self.hermitian and np.imag(scalar) == 0
        return HermitianOperator(self.matrix * scalar, keep)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, HermitianOperator):
            self._check_dim(other)
            return HermitianOperator(self.matrix @ other.matrix, hermitian=False)
        return NotImplemented

    def __repr__(self):
        return f"HermitianOperator(dim={self.dim}, nnz={self.nnz}, hermitian={self.hermitian})"


def _pauli_coo(p: PauliString, reg: QubitRegister):
    n = reg.n_total
    cols = np.arange(reg.dim, dtype=np.int64)
    flip = 0
    phase = np.full(reg.dim, p.coefficient, dtype=complex)
    for label, op in p.factors:
        shift = n - 1 - reg.index(label)
        bit = (cols >> shift) & 1
        sign = 1 - 2 * bit
        if op in ("X", "Y"):
            flip |= 1 << shift
        if op == "Z":
            phase *= sign
        elif op == "Y":
            phase *= 1j * sign
    return cols ^ flip, cols, phase


def pauli_to_operator(
    p: PauliString | Sequence[PauliString], reg: QubitRegister, hermitian: bool | None = None
) -> HermitianOperator:
    """Materialise a Pauli string (or a sum of them) as a sparse matrix on ``reg``.

    ``hermitian`` defaults to "all coefficients real".  Asserting
    ``hermitian=True`` with a non-real coefficient is a contract error.
    """
    terms = [p] if isinstance(p, PauliString) else list(p)
    real = all(t.coefficient.imag == 0 for t in terms)
    if hermitian is None:
        hermitian = real
    elif hermitian and not real:
        raise ContractError("non-real Pauli coefficient on an operator asserted Hermitian")
    if not terms:
        return HermitianOperator.zeros(reg.dim)
    rows, cols, vals = zip(*(_pauli_coo(t, reg) for t in terms))
    m = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(reg.dim, reg.dim),
    ).tocsr()
    m.eliminate_zeros()
    return HermitianOperator(m, hermitian=hermitian)


def commutator(a: HermitianOperator, b: HermitianOperator) -> HermitianOperator:
    """``ab - ba``; anti-Hermitian for Hermitian inputs, so stored with the flag cleared."""
    a._check_dim(b)
    return HermitianOperator(a.matrix @ b.matrix - b.matrix @ a.matrix, hermitian=False)


def _as_matrix(a):
    if isinstance(a, HermitianOperator):
        return a.matrix, a.hermitian
    if sp.issparse(a):
        return sp.csr_matrix(a, dtype=complex), False
    return np.asarray(a, dtype=complex), False


def spectral_norm(a, return_method: bool = False, dense_limit: int = DENSE_NORM_LIMIT):
    """Largest singular value.

    Small operators go straight to a dense solve.  Larger ones use Lanczos
    (ARPACK) from a fixed start vector, on ``a`` itself when it is Hermitian
    or anti-Hermitian and on ``a^H a`` otherwise, falling back to a dense
    solve up to ``dense_limit`` if Lanczos does not converge.
    """
    m, herm = _as_matrix(a)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ContractError(f"spectral_norm needs a square matrix, got shape {m.shape}")
    dim = m.shape[0]
    is_sparse = sp.issparse(m)
    if (is_sparse and (m.nnz == 0 or not np.any(m.data))) or (not is_sparse and not np.any(m)):
        return (0.0, "zero") if return_method else 0.0

    if not herm and is_sparse:
        anti = abs(m + m.conj().T)
        if (anti.max() if anti.nnz else 0.0) <= HERMITICITY_ATOL:
            m, herm = (1j * m).tocsr(), True

    def dense():
        d = m.toarray() if is_sparse else m
        if herm:
            return float(np.max(np.abs(np.linalg.eigvalsh(d))))
        return float(np.linalg.norm(d, 2))

    if dim <= 256:
        value, method = dense(), "dense"
    else:
        v0 = np.random.default_rng(12345).standard_normal(dim).astype(complex)
        try:
            if herm:
                ev = spla.eigsh(m, k=1, which="LM", v0=v0, tol=1e-12, return_eigenvectors=False)
                value = float(abs(ev[0]))
            else:
                mh = m.conj().T
                gram = spla.LinearOperator((dim, dim), matvec=lambda x: mh @ (m @ x), dtype=complex)
                ev = spla.eigsh(gram, k=1, which="LA", v0=v0, tol=1e-14, return_eigenvectors=False)
                value = float(np.sqrt(max(ev[0].real, 0.0)))
            method = "lanczos"
        except (spla.ArpackNoConvergence, spla.ArpackError) as exc:
            if dim > dense_limit:
                raise
            logger.warning("Lanczos norm estimate failed (%s); using dense solve", exc)
            value, method = dense(), "dense"
    return (value, method) if return_method else value


def apply(a: HermitianOperator, s: np.ndarray) -> np.ndarray:
    """Matrix-vector (or matrix-block) product, no normalisation."""
    s = np.asarray(s)
    if s.shape[0] != a.dim:
        raise ContractError(f"operator of dim {a.dim} applied to state of length {s.shape[0]}")
    return a.matrix @ s


# --- states -------------------------------------------------------------

STATE_NORM_ATOL = 1e-9


def as_state(x, dim: int | None = None, check_norm: bool = True) -> np.ndarray:
    """Validated, read-only complex state vector."""
    v = np.array(x, dtype=complex).reshape(-1)
    if dim is not None and v.size != dim:
        raise ContractError(f"state has length {v.size}, expected {dim}")
    if v.size & (v.size - 1):
        raise ContractError(f"state length {v.size} is not a power of two")
    if check_norm and abs(np.linalg.norm(v) - 1.0) > STATE_NORM_ATOL:
        raise ContractError(f"state not normalised: |psi| = {np.linalg.norm(v):.12f}")
    v.flags.writeable = False
    return v


def basis_state(index: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return as_state(v)


def random_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random pure state from normalised complex Gaussians."""
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return as_state(v / np.linalg.norm(v))


def embed(block: np.ndarray | sp.spmatrix, before: int, after: int) -> sp.csr_matrix:
    """``I_before (x) block (x) I_after`` with identities given by their dimensions."""
    out = sp.csr_matrix(block, dtype=complex)
    if before > 1:
        out = sp.kron(sp.identity(before, dtype=complex, format="csr"), out, format="csr")
    if after > 1:
        out = sp.kron(out, sp.identity(after, dtype=complex, format="csr"), format="csr")
    return out
