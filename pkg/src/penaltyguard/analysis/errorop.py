"""The modulated error operator ``F(t)``, its norm bounds and the large-penalty limit.

``F(t) = int_0^t exp(i E_P tau) U_0^H(tau) V U_0(tau) P dtau`` is evaluated in
the eigenbasis of the coupling-free Hamiltonian ``H_0``, where each matrix
element integrates in closed form.  ``H_0`` is a sum of a system term and an
environment term, so its eigenbasis is the Kronecker product of the two
factor bases and is never diagonalised at full size.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from ..errors import ContractError
from ..pauli import HermitianOperator, commutator, spectral_norm
from ..propagate import SpectralForm, diagonalize

logger = logging.getLogger(__name__)

PF_ATOL = 1e-10
LAMBDA_WARN = 0.3
DENSE_OPERATOR_LIMIT = 1024


def _largest_singular(m: np.ndarray) -> float:
    """Largest singular value of a tall matrix through its Gram matrix."""
    if m.shape[0] < m.shape[1]:
        m = m.conj().T
    g = m.conj().T @ m
    return float(math.sqrt(max(np.linalg.eigvalsh(g)[-1], 0.0)))


def _kron_apply_left(ws: np.ndarray, we: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``(ws (x) we) @ x`` without forming the Kronecker product."""
    ds, de = ws.shape[0], we.shape[0]
    y = x.reshape(ds, de, -1)
    y = np.tensordot(ws, y, axes=(1, 0))
    y = np.tensordot(we, y, axes=(1, 1)).transpose(1, 0, 2)
    return y.reshape(ds * de, -1)


def integrated_phase(omega: np.ndarray, t: float) -> np.ndarray:
    """``int_0^t exp(i omega tau) dtau`` elementwise, exact near ``omega = 0``."""
    omega = np.asarray(omega, dtype=float)
    x = omega * t
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, omega)
    out = np.expm1(1j * x) / (1j * safe)
    return np.where(small, t * (1 + 0.5j * x), out)


@dataclass
class FSeries:
    times: np.ndarray
    norms: np.ndarray
    pf_residuals: np.ndarray
    operators: list | None = field(default=None, repr=False)


class FreeEigenbasis:
    """Eigenbasis of ``H_0 = h_sys (x) I + I (x) H_env`` for a time-independent instance."""

    def __init__(self, inst):
        if not inst.time_independent:
            raise ContractError("F(t) is only evaluated for time-independent instances")
        self.inst = inst
        self.es, self.ws = np.linalg.eigh(inst.h_sys(0.0))
        self.ee, self.we = np.linalg.eigh(inst.h_env_dense())
        self.energies = (self.es[:, None] + self.ee[None, :]).ravel()
        # W^H C, with C the codespace isometry (x) I_env
        c_s = inst.fam.codespace_isometry
        self.wc = np.kron(self.ws.conj().T @ c_s, self.we.conj().T)
        self._vt: dict[int, np.ndarray] = {}

    @property
    def dim(self) -> int:
        return self.energies.size

    def to_eigenbasis(self, op) -> np.ndarray:
        """``W^H op W`` as a dense array."""
        m = op.matrix if isinstance(op, HermitianOperator) else op
        ws_h, we_h = self.ws.conj().T, self.we.conj().T
        mw = np.asarray(m @ self._w_dense())
        return _kron_apply_left(ws_h, we_h, mw)

    def _w_dense(self) -> np.ndarray:
        return np.kron(self.ws, self.we)

    def _vt_for(self, V) -> np.ndarray:
        key = id(V)
        if key not in self._vt:
            self._vt[key] = self.to_eigenbasis(V)
        return self._vt[key]

    def modulated(self, V, t: float, e_penalty: float) -> np.ndarray:
        """``M(t) * V~`` with ``M_EE' = int_0^t exp(i (E_P + E - E') tau) dtau``."""
        vt = self._vt_for(V)
        omega = e_penalty + self.energies[:, None] - self.energies[None, :]
        return integrated_phase(omega, t) * vt


def compute_F(inst, times: Sequence[float], V=None, basis: FreeEigenbasis | None = None,
              return_operators: bool = False) -> FSeries:
    """``||F(t)||`` on a time grid, checking ``P F(t) = 0`` at every time.

    ``V`` defaults to the instance coupling; pass one of ``inst.V_parts`` to
    get a single-block ``F_i``.  Full operators are returned only for small
    registers (dimension <= 1024).
    """
    basis = basis or FreeEigenbasis(inst)
    V = inst.V if V is None else V
    times = np.asarray(times, dtype=float)
    if return_operators and basis.dim > DENSE_OPERATOR_LIMIT:
        raise ContractError(f"dense F operators limited to dimension {DENSE_OPERATOR_LIMIT}")
    norms, pf, ops = [], [], []
    for t in times:
        mv = basis.modulated(V, float(t), inst.e_penalty)
        g = mv @ basis.wc
        norms.append(_largest_singular(g))
        # C^H F C-block: P F = W-coordinates (W^H C)^H (M*V~) (W^H C) (C^H)
        pf_res = float(np.abs(basis.wc.conj().T @ g).max()) if g.size else 0.0
        pf.append(pf_res)
        if pf_res > PF_ATOL:
            raise ContractError(f"P F(t) != 0 at t={t}: residual {pf_res:.3e}")
        if return_operators:
            w = basis._w_dense()
            P = inst.fam.total_P.toarray()
            ops.append(w @ mv @ w.conj().T @ P)
    return FSeries(times, np.array(norms), np.array(pf), ops if return_operators else None)


# --- norm bounds ----------------------------------------------------------

@dataclass(frozen=True)
class InstanceNorms:
    v: float
    h0: float
    commutator: float
    v_parts: tuple[float, ...]
    commutator_parts: tuple[float, ...]


_NORM_CACHE: dict[str, InstanceNorms] = {}


def instance_norms(inst) -> InstanceNorms:
    """Spectral norms of ``V``, ``H_0`` and ``[V, H_0]``, total and per logical block.

    Independent of ``lambda`` and ``E_P``, so cached across those.
    """
    key = inst.config.replace(lam=0.0, e_penalty=0.0).hash()
    if key in _NORM_CACHE:
        return _NORM_CACHE[key]
    h0 = inst.H0(0.0)
    v_parts = tuple(spectral_norm(v) for v in inst.V_parts)
    c_parts = tuple(spectral_norm(commutator(v, h0)) for v in inst.V_parts)
    out = InstanceNorms(spectral_norm(inst.V), spectral_norm(h0),
                        spectral_norm(commutator(inst.V, h0)), v_parts, c_parts)
    _NORM_CACHE[key] = out
    return out


def bound_F(inst, T: float, norms: InstanceNorms | None = None) -> float:
    """``sqrt(n) max_i (2 ||V_i|| + ||[V_i, H_0]|| T) / |E_P|``."""
    if not inst.time_independent:
        raise ContractError("bound_F uses the time-independent commutator; schedule given")
    norms = norms or instance_norms(inst)
    if inst.e_penalty == 0:
        return float("inf")
    per_block = [2 * v + c * T for v, c in zip(norms.v_parts, norms.commutator_parts)]
    return math.sqrt(inst.n_logical) * max(per_block) / abs(inst.e_penalty)


def fidelity_bound(lam: float, F_norm: float) -> float:
    """Leading-order infidelity bound ``lambda^2 ||F||^2``."""
    if abs(lam) > LAMBDA_WARN:
        warnings.warn(f"lambda={lam} is not small; the leading-order bound may not hold",
                      stacklevel=2)
    return lam**2 * F_norm**2


def cross_term_norm(inst, t: float) -> float:
    """``|| sum_{i != j} F_i^H F_j ||`` for a small multi-block instance."""
    basis = FreeEigenbasis(inst)
    fs = [compute_F(inst, [t], V=v, basis=basis, return_operators=True).operators[0]
          for v in inst.V_parts]
    acc = np.zeros_like(fs[0])
    for i, fi in enumerate(fs):
        for j, fj in enumerate(fs):
            if i != j:
                acc += fi.conj().T @ fj
    return float(np.linalg.norm(acc, 2))


# --- large-penalty limit ---------------------------------------------------

@dataclass
class DecayReport:
    e_penalties: np.ndarray
    norms: np.ndarray
    exponent: float
    prefactor: float
    r2: float
    monotone: bool
    degenerate: bool

    def exponent_in(self, lo: float = -1.2, hi: float = -0.8) -> bool:
        return lo <= self.exponent <= hi

    def to_dict(self) -> dict:
        return {
            "e_penalties": [float(x) for x in self.e_penalties],
            "norms": [float(x) for x in self.norms],
            "exponent": self.exponent,
            "prefactor": self.prefactor,
            "r2": self.r2,
            "monotone": self.monotone,
            "degenerate": self.degenerate,
        }


def leakage_difference(inst, T: float, sf: SpectralForm) -> float:
    """``|| (U(T) - U_0(T)) P ||`` from the full spectral form of ``H``."""
    c_s = inst.fam.codespace_isometry
    env_dim = inst.reg.env_dim
    basis_c = sp.kron(sp.csr_matrix(c_s), sp.identity(env_dim, format="csr"), format="csr")
    w = sf.eigenvectors
    coeffs = (basis_c.T.conj() @ w).conj().T  # W^H C
    u_c = w @ (np.exp(-1j * sf.eigenvalues * T)[:, None] * coeffs)
    es, ws = np.linalg.eigh(inst.h_sys(0.0))
    ee, we = np.linalg.eigh(inst.h_env_dense())
    us = ws @ (np.exp(-1j * es * T)[:, None] * ws.conj().T)
    ue = we @ (np.exp(-1j * ee * T)[:, None] * we.conj().T)
    u0_c = np.kron(us @ c_s, ue)
    return _largest_singular(u_c - u0_c)


def power_law_fit(x: Sequence[float], y: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares ``log y = log a + k log x``; returns ``(k, a, R^2)``."""
    lx, ly = np.log(np.abs(x)), np.log(y)
    k, b = np.polyfit(lx, ly, 1)
    resid = ly - (k * lx + b)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(k), float(math.exp(b)), r2


def theorem_limit_check(inst, T: float, e_penalties: Sequence[float],
                        spectral: Callable[[object], SpectralForm] | None = None) -> DecayReport:
    """Decay of ``||(U(T) - U_0(T)) P||`` along a list of penalties of increasing magnitude.

    Each penalty needs one full diagonalisation (``spectral`` may supply a
    cached one).  Non-monotone decay is reported, not raised: resonances
    between ``E_P`` and ``H_0`` energy differences are possible.
    """
    if not inst.time_independent:
        raise ContractError("theorem_limit_check needs a time-independent instance")
    eps = np.asarray(e_penalties, dtype=float)
    mags = np.abs(eps)
    if eps.size < 2 or np.any(np.diff(mags) <= 0) or np.any(mags == 0):
        raise ContractError("e_penalties must be non-zero with strictly increasing magnitude")
    spectral = spectral or (lambda i: diagonalize(i.H(), i.config_hash))
    norms = []
    for ep in eps:
        sub = inst.with_params(e_penalty=float(ep))
        norms.append(leakage_difference(sub, T, spectral(sub)))
        logger.info("E_P=%g: ||(U-U0)P|| = %.6e", ep, norms[-1])
    norms = np.array(norms)
    degenerate = bool(np.all(norms < 1e-12))
    if degenerate:
        return DecayReport(eps, norms, float("nan"), 0.0, float("nan"), False, True)
    monotone = bool(np.all(np.diff(norms) < 0))
    if not monotone:
        logger.warning("non-monotone decay of ||(U-U0)P|| over E_P=%s", list(eps))
    k, a, r2 = power_law_fit(mags, norms)
    return DecayReport(eps, norms, k, a, r2, monotone, False)
