"""Error-detecting codes, codespace projectors and logical encoding.

Codes are described by data (logical basis states and logical operator
matrices), not by a stabilizer tableau; every property the energy-penalty
analysis needs is a matrix identity checked directly.
"""

from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import ContractError, DetectionFailure, NumericalContractError
from .pauli import (
    PAULI_MATRICES,
    HermitianOperator,
    PauliString,
    QubitRegister,
    embed,
)

logger = logging.getLogger(__name__)

IDENTITY_ATOL = 1e-12


def _kron_all(mats):
    return reduce(lambda a, b: sp.kron(a, b, format="csr"), mats)


def _dense_pauli(label: str) -> np.ndarray:
    return reduce(np.kron, (PAULI_MATRICES[c] for c in label))


@dataclass(frozen=True)
class CodeSpec:
    """An ``[[ell, 1]]`` code given by its logical states and logical Paulis.

    Logical operators are dense ``2**ell`` matrices.  Orthonormality of the
    logical states and commutation of the logical operators with the
    codespace projector are checked on construction; detection is checked by
    :func:`verify_detection`.
    """

    name: str
    ell: int
    logical_zero: np.ndarray
    logical_one: np.ndarray
    logical_x: np.ndarray
    logical_y: np.ndarray
    logical_z: np.ndarray
    detect_weight: int = 1
    projector: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        d = 2**self.ell
        for name in ("logical_zero", "logical_one"):
            v = np.asarray(getattr(self, name), dtype=complex)
            if v.shape != (d,):
                raise ContractError(f"{name} must have length {d}")
            v.flags.writeable = False
            object.__setattr__(self, name, v)
        for name in ("logical_x", "logical_y", "logical_z"):
            m = np.asarray(getattr(self, name), dtype=complex)
            if m.shape != (d, d):
                raise ContractError(f"{name} must be {d}x{d}")
            if np.abs(m - m.conj().T).max() > IDENTITY_ATOL:
                raise ContractError(f"{name} is not Hermitian")
            m.flags.writeable = False
            object.__setattr__(self, name, m)

        z, o = self.logical_zero, self.logical_one
        gram = np.array([[np.vdot(z, z), np.vdot(z, o)], [np.vdot(o, z), np.vdot(o, o)]])
        if np.abs(gram - np.eye(2)).max() > IDENTITY_ATOL:
            raise ContractError(f"logical states are not orthonormal: gram={gram}")
        proj = np.outer(z, z.conj()) + np.outer(o, o.conj())
        proj.flags.writeable = False
        object.__setattr__(self, "projector", proj)
        for name in ("logical_x", "logical_y", "logical_z"):
            m = getattr(self, name)
            if np.abs(m @ proj - proj @ m).max() > IDENTITY_ATOL:
                raise ContractError(f"{name} does not commute with the codespace projector")

    @property
    def dim(self) -> int:
        return 2**self.ell

    @property
    def basis(self) -> np.ndarray:
        """``dim x 2`` isometry with columns ``|0_L>, |1_L>``."""
        return np.column_stack([self.logical_zero, self.logical_one])

    def logical(self, op: str) -> np.ndarray:
        return {
            "I": np.eye(self.dim, dtype=complex),
            "X": self.logical_x,
            "Y": self.logical_y,
            "Z": self.logical_z,
        }[op]

    def encode_state(self, coeffs: Sequence[complex]) -> np.ndarray:
        """``a|0_L> + b|1_L>`` for ``coeffs = (a, b)``."""
        a, b = coeffs
        return a * self.logical_zero + b * self.logical_one

    def logical_action_table(self) -> dict[str, dict]:
        """Restriction of each logical operator to the codespace.

        Each entry records the 2x2 matrix ``<a_L|O_L|b_L>``, the global phase
        ``c`` that best maps the bare Pauli onto it, and the residual
        ``max|M - c*sigma|``.
        """
        c = self.basis
        table = {}
        for op in "XYZ":
            m = c.conj().T @ self.logical(op) @ c
            sigma = PAULI_MATRICES[op]
            overlap = np.trace(sigma.conj().T @ m) / 2
            phase = overlap / abs(overlap) if abs(overlap) > 0 else 1.0
            table[op] = {
                "matrix": m,
                "phase": complex(phase),
                "residual": float(np.abs(m - phase * sigma).max()),
            }
        return table


def build_jfs_code() -> CodeSpec:
    """Four-qubit Jordan-Farhi-Shor code detecting all single-qubit errors."""
    def ket(bits: str) -> np.ndarray:
        v = np.zeros(16, dtype=complex)
        v[int(bits, 2)] = 1.0
        return v

    zero = 0.5 * (ket("0000") + 1j * ket("0011") + 1j * ket("1100") + ket("1111"))
    one = 0.5 * (-ket("1010") + 1j * ket("1001") + 1j * ket("0110") - ket("0101"))
    return CodeSpec(
        name="jfs4",
        ell=4,
        logical_zero=zero,
        logical_one=one,
        logical_x=_dense_pauli("YIYI"),
        logical_y=-_dense_pauli("IXXI"),
        logical_z=_dense_pauli("ZZII"),
        detect_weight=1,
    )


CODES = {"jfs4": build_jfs_code}


@dataclass
class DetectionReport:
    code: str
    n_checked: int
    max_residual: float
    residuals: dict[str, float]
    logical_table: dict[str, dict]

    @property
    def passed(self) -> bool:
        return self.max_residual < IDENTITY_ATOL and all(
            row["residual"] < IDENTITY_ATOL for row in self.logical_table.values()
        )

    def to_dict(self) -> dict:
        return {
            "code": self.code,
            "n_checked": self.n_checked,
            "max_residual": self.max_residual,
            "passed": self.passed,
            "residuals": self.residuals,
            "logical_action": {
                op: {
                    "phase": [row["phase"].real, row["phase"].imag],
                    "residual": row["residual"],
                }
                for op, row in self.logical_table.items()
            },
        }


def error_strings(ell: int, max_weight: int) -> list[str]:
    """All Pauli labels on ``ell`` qubits with weight 1..max_weight."""
    out = []
    for w in range(1, max_weight + 1):
        for qubits in itertools.combinations(range(ell), w):
            for ops in itertools.product("XYZ", repeat=w):
                label = ["I"] * ell
                for q, o in zip(qubits, ops):
                    label[q] = o
                out.append("".join(label))
    return out


def verify_detection(code: CodeSpec, raise_on_failure: bool = True) -> DetectionReport:
    """Check ``P sigma P = 0`` for every Pauli error up to the code's detect weight."""
    proj = code.projector
    residuals = {}
    for label in error_strings(code.ell, code.detect_weight):
        residuals[label] = float(np.linalg.norm(proj @ _dense_pauli(label) @ proj, 2))
    report = DetectionReport(
        code=code.name,
        n_checked=len(residuals),
        max_residual=max(residuals.values()),
        residuals=residuals,
        logical_table=code.logical_action_table(),
    )
    if raise_on_failure:
        bad = {k: v for k, v in residuals.items() if v >= IDENTITY_ATOL}
        if bad:
            worst = max(bad, key=bad.get)
            raise DetectionFailure(
                f"code {code.name} fails to detect {len(bad)} error(s); "
                f"worst is {worst} with |P s P| = {bad[worst]:.3e}"
            )
        for op, row in report.logical_table.items():
            if row["residual"] >= IDENTITY_ATOL:
                raise DetectionFailure(
                    f"logical {op} does not act as a Pauli on the codespace "
                    f"(residual {row['residual']:.3e})"
                )
    return report


def encode_hamiltonian(
    h: Sequence[PauliString],
    code: CodeSpec,
    n_logical: int,
    reg: QubitRegister | None = None,
) -> HermitianOperator:
    """Replace X, Y, Z on each logical qubit by the code's logical operators.

    ``h`` is a list of Pauli strings labelled by logical qubit index
    ``0..n_logical-1``.  The result lives on the ``ell*n_logical`` system
    qubits, or on the whole of ``reg`` (identity on the environment) when
    a register is given.
    """
    sys_dim = code.dim**n_logical
    total = sp.csr_matrix((sys_dim, sys_dim), dtype=complex)
    for term in h:
        ops = ["I"] * n_logical
        for label, op in term.factors:
            if not isinstance(label, (int, np.integer)) or not 0 <= label < n_logical:
                raise ContractError(
                    f"logical Pauli term references qubit {label!r}; valid range 0..{n_logical - 1}"
                )
            ops[label] = op
        total = total + term.coefficient * _kron_all([sp.csr_matrix(code.logical(o)) for o in ops])
    hermitian = all(t.coefficient.imag == 0 for t in h)
    if reg is None:
        return HermitianOperator(total, hermitian=hermitian)
    if reg.n_system != code.ell * n_logical:
        raise ContractError(
            f"register has {reg.n_system} system qubits, code needs {code.ell * n_logical}"
        )
    return HermitianOperator(embed(total, 1, reg.env_dim), hermitian=hermitian)


@dataclass(frozen=True)
class ProjectorFamily:
    """Codespace projectors for ``n_logical`` blocks, embedded in a register.

    Operators here act on the full register.  ``system_*`` attributes hold
    the same objects restricted to the system qubits, as dense arrays, for
    use by factorised computations.
    """

    code: CodeSpec
    n_logical: int
    reg: QubitRegister
    per_logical_P: tuple[HermitianOperator, ...]
    per_logical_Q: tuple[HermitianOperator, ...]
    total_P: HermitianOperator
    penalty_Q: HermitianOperator
    r_family: tuple[HermitianOperator, ...]
    system_P: np.ndarray = field(repr=False)
    system_penalty_Q: np.ndarray = field(repr=False)
    system_r_family: tuple[np.ndarray, ...] = field(repr=False)

    def block_qubits(self, i: int) -> tuple:
        return self.reg.system[i * self.code.ell:(i + 1) * self.code.ell]

    @property
    def codespace_isometry(self) -> np.ndarray:
        """``2**(ell*n) x 2**n`` system isometry onto the codespace (logical basis order)."""
        return reduce(np.kron, [self.code.basis] * self.n_logical)


def build_projector_family(code: CodeSpec, n_logical: int, reg: QubitRegister) -> ProjectorFamily:
    """``P_i``, ``Q_i``, ``P = prod P_i``, ``Q~ = sum Q_i`` and ``R_0..R_n``.

    ``R_r`` is expanded over all subsets of blocks, so its cost grows as
    ``2**n_logical``; fine for the one- and two-block systems simulated here.
    """
    if reg.n_system != code.ell * n_logical:
        raise ContractError(
            f"register has {reg.n_system} system qubits, code needs {code.ell}x{n_logical}"
        )
    if n_logical > 10:
        warnings.warn(f"R_r expansion over 2**{n_logical} subsets", RuntimeWarning)
    d = code.dim
    sys_dim = d**n_logical
    env = reg.env_dim
    eye_d = np.eye(d, dtype=complex)
    pb = code.projector
    qb = eye_d - pb

    def block_op(i, m):
        return embed(m, d**i, d ** (n_logical - 1 - i))

    sys_P = [block_op(i, pb) for i in range(n_logical)]
    sys_Q = [block_op(i, qb) for i in range(n_logical)]
    sys_total_P = reduce(lambda a, b: a @ b, sys_P)
    sys_penalty = reduce(lambda a, b: a + b, sys_Q)

    sys_r = []
    for r in range(n_logical + 1):
        acc = sp.csr_matrix((sys_dim, sys_dim), dtype=complex)
        for chosen in itertools.combinations(range(n_logical), r):
            factors = [qb if i in chosen else pb for i in range(n_logical)]
            acc = acc + _kron_all([sp.csr_matrix(f) for f in factors])
        sys_r.append(acc)

    def full(m):
        m = sp.csr_matrix(m)
        m.data[np.abs(m.data) < 1e-15] = 0
        m.eliminate_zeros()
        return HermitianOperator(embed(m, 1, env))

    return ProjectorFamily(
        code=code,
        n_logical=n_logical,
        reg=reg,
        per_logical_P=tuple(full(m) for m in sys_P),
        per_logical_Q=tuple(full(m) for m in sys_Q),
        total_P=full(sys_total_P),
        penalty_Q=full(sys_penalty),
        r_family=tuple(full(m) for m in sys_r),
        system_P=sys_total_P.toarray(),
        system_penalty_Q=sys_penalty.toarray(),
        system_r_family=tuple(m.toarray() for m in sys_r),
    )


@dataclass
class PhaseCheckReport:
    pvp_residual: float
    multi_phase_residual: float
    single_phase_residual: float


def _fro(m) -> float:
    return float(sp.linalg.norm(m)) if sp.issparse(m) else float(np.linalg.norm(m))


def phase_decomposition_check(
    V: HermitianOperator,
    fam: ProjectorFamily,
    e_penalty: float,
    tau: float,
    single_phase: bool = False,
    tol: float = 1e-10,
) -> PhaseCheckReport:
    """Check the graded phase structure of ``exp(i E_P Q~ tau) V P``.

    The left side uses a direct matrix exponential of the system penalty
    operator; the right side is ``sum_{r>=1} exp(i r E_P tau) R_r V P``.
    With ``single_phase=True`` the single-phase form ``exp(i E_P tau) V P``
    (valid for 1-local ``V``) must hold as well.  Residuals are Frobenius
    norms.
    """
    if V.dim != fam.reg.dim:
        raise ContractError(f"V has dim {V.dim}, register has {fam.reg.dim}")
    P = fam.total_P.matrix
    VP = V.matrix @ P
    pvp = _fro(P @ VP)
    if pvp > tol:
        raise ContractError(f"precondition PVP = 0 violated: |PVP|_F = {pvp:.3e}")

    rot = sla.expm(1j * e_penalty * tau * fam.system_penalty_Q)
    lhs = embed(rot, 1, fam.reg.env_dim) @ VP
    rhs = sp.csr_matrix(VP.shape, dtype=complex)
    for r, R in enumerate(fam.r_family[1:], start=1):
        rhs = rhs + np.exp(1j * r * e_penalty * tau) * (R.matrix @ VP)
    multi = _fro(lhs - rhs)
    single = _fro(lhs - np.exp(1j * e_penalty * tau) * VP)
    if multi > tol:
        raise NumericalContractError(f"graded phase decomposition residual {multi:.3e} > {tol:g}")
    if single_phase and single > tol:
        raise NumericalContractError(f"single-phase identity residual {single:.3e} > {tol:g}")
    return PhaseCheckReport(pvp, multi, single)
