"""Fidelity and codespace diagnostics on evolved states."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..errors import ContractError
from ..pauli import STATE_NORM_ATOL, HermitianOperator, QubitRegister

PSD_ATOL = 1e-9
RANGE_SLACK = 1e-9


@dataclass(frozen=True)
class FidelityPoint:
    t: float
    total_sq: float
    system_sq: float
    codespace_prob: float

    def __post_init__(self):
        for name in ("total_sq", "system_sq", "codespace_prob"):
            v = getattr(self, name)
            if not -RANGE_SLACK <= v <= 1 + RANGE_SLACK:
                raise ContractError(f"{name}={v} outside [0, 1]")


def _check_unit(v: np.ndarray, what: str):
    norms = np.linalg.norm(v, axis=-1)
    if np.any(np.abs(norms - 1) > STATE_NORM_ATOL):
        raise ContractError(f"{what} is not normalised (norm {np.ravel(norms)[0]:.12g})")


def total_fidelity_sq(phi0: np.ndarray, phi: np.ndarray) -> float | np.ndarray:
    """``|<phi0|phi>|^2``; row-wise when given 2-D stacks of states."""
    phi0, phi = np.asarray(phi0), np.asarray(phi)
    if phi0.shape != phi.shape:
        raise ContractError(f"shape mismatch {phi0.shape} vs {phi.shape}")
    _check_unit(phi0, "phi0")
    _check_unit(phi, "phi")
    ov = np.einsum("...i,...i->...", phi0.conj(), phi)
    out = np.abs(ov) ** 2
    return float(out) if out.ndim == 0 else out


def _dims(reg) -> tuple[int, int]:
    if isinstance(reg, QubitRegister):
        return reg.system_dim, reg.env_dim
    return int(reg[0]), int(reg[1])


def partial_trace_env(phi: np.ndarray, reg) -> np.ndarray:
    """Reduced system density matrix ``tr_env |phi><phi|``.

    ``reg`` is a :class:`QubitRegister` or a ``(system_dim, env_dim)`` pair;
    system qubits lead the basis index.  A stack of states gives a stack of
    density matrices.
    """
    ds, de = _dims(reg)
    phi = np.asarray(phi)
    if phi.shape[-1] != ds * de:
        raise ContractError(f"state length {phi.shape[-1]} != {ds}*{de}")
    _check_unit(phi, "phi")
    m = phi.reshape(phi.shape[:-1] + (ds, de))
    return np.einsum("...ae,...be->...ab", m, m.conj())


def system_fidelity_sq(phi0_s: np.ndarray, rho: np.ndarray) -> float:
    """``<phi0_s|rho|phi0_s>`` for a valid density matrix."""
    rho = np.asarray(rho)
    _check_unit(phi0_s, "phi0_s")
    if np.abs(rho - rho.conj().T).max() > PSD_ATOL:
        raise ContractError("rho is not Hermitian")
    if abs(np.trace(rho) - 1) > 1e-9:
        raise ContractError(f"rho has trace {np.trace(rho).real:.12g}")
    lo = np.linalg.eigvalsh(rho)[0]
    if lo < -PSD_ATOL:
        raise ContractError(f"rho is not positive semidefinite (min eigenvalue {lo:.3e})")
    return float(np.clip(np.real(np.vdot(phi0_s, rho @ phi0_s)), 0.0, 1.0))


def system_fidelity_sq_series(phi0_s: np.ndarray, phi: np.ndarray, reg) -> np.ndarray:
    """Row-wise ``<phi0_s|tr_env|phi><phi||phi0_s>`` without forming ``rho``.

    Equals ``|| M^H phi0_s ||^2`` with ``M`` the state reshaped to
    ``(system, env)``.
    """
    ds, de = _dims(reg)
    phi = np.atleast_2d(phi)
    phi0_s = np.atleast_2d(phi0_s)
    _check_unit(phi, "phi")
    _check_unit(phi0_s, "phi0_s")
    if phi0_s.shape[0] == 1:
        phi0_s = np.broadcast_to(phi0_s, (phi.shape[0], ds))
    m = phi.reshape(-1, ds, de)
    amp = np.einsum("ka,kae->ke", phi0_s.conj(), m)
    return np.sum(np.abs(amp) ** 2, axis=1)


def codespace_probability(phi: np.ndarray, P, reg=None) -> float | np.ndarray:
    """``<phi|P|phi>``.

    ``P`` may act on the whole register, or on the system alone when ``reg``
    gives the system/environment split (``P (x) I_env`` is then implied).
    """
    if isinstance(P, HermitianOperator):
        P = P.matrix
    phi = np.asarray(phi)
    _check_unit(phi, "phi")
    single = phi.ndim == 1
    phi = np.atleast_2d(phi)
    if P.shape[0] == phi.shape[1]:
        vals = np.real(np.einsum("ki,ki->k", phi.conj(), (P @ phi.T).T))
    else:
        if reg is None:
            raise ContractError("system-only projector needs reg")
        ds, de = _dims(reg)
        if P.shape[0] != ds:
            raise ContractError(f"projector dimension {P.shape[0]} != system dimension {ds}")
        m = phi.reshape(-1, ds, de)
        pm = np.einsum("ab,kbe->kae", P.toarray() if sp.issparse(P) else P, m)
        vals = np.real(np.einsum("kae,kae->k", m.conj(), pm))
    vals = np.clip(vals, 0.0, 1.0)
    return float(vals[0]) if single else vals


def fidelity_points(traj, inst) -> list[FidelityPoint]:
    """Diagnostics at every time of a :class:`~penaltyguard.propagate.Trajectory`."""
    reg = inst.reg
    phi0 = np.einsum("ka,ke->kae", traj.phi0_sys, traj.phi0_env).reshape(len(traj.times), -1)
    f_tot = np.atleast_1d(total_fidelity_sq(phi0, traj.phi))
    f_sys = system_fidelity_sq_series(traj.phi0_sys, traj.phi, reg)
    p_code = np.atleast_1d(codespace_probability(traj.phi, inst.fam.system_P, reg))
    return [FidelityPoint(float(t), float(a), float(b), float(c))
            for t, a, b, c in zip(traj.times, f_tot, f_sys, p_code)]
