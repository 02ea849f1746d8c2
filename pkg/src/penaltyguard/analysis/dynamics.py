"""Late-time system fidelity: protection time and long-term dephasing averages."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ContractError
from ..pauli import as_state
from ..propagate import SpectralForm, SpectralPropagator, diagonalize
from .fidelity import codespace_probability, system_fidelity_sq_series

SCAN_FACTOR = 1.3
SCAN_WINDOW = 5
DEFAULT_T_MAX = 1e12
CI_AVERAGING_TIMES = tuple(k * 1e5 for k in range(1, 11))
PAPER_AVERAGING_TIMES = tuple(k * 1e8 for k in range(1, 11))


class SystemFidelityProbe:
    """``F_s^2(t)`` and codespace probability at arbitrary times for one initial state."""

    def __init__(self, inst, sf: SpectralForm | None = None, system_state=None, env_state=None):
        if not inst.time_independent:
            raise ContractError("spectral probes need a time-independent instance")
        self.inst = inst
        psi_s = inst.system_state() if system_state is None else as_state(system_state, inst.reg.system_dim)
        psi_e = inst.env_state() if env_state is None else as_state(env_state, inst.reg.env_dim)
        self.sf = sf if sf is not None else diagonalize(inst.H(), inst.config_hash)
        self.full = SpectralPropagator(self.sf, np.kron(psi_s, psi_e))
        self.es, self.ws = np.linalg.eigh(inst.h_sys(0.0))
        self.c_s = self.ws.conj().T @ psi_s
        self.evaluations = 0

    def phi0_sys(self, times) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        return (self.ws @ (np.exp(-1j * np.outer(self.es, times)) * self.c_s[:, None])).T

    def system_fidelity(self, times) -> np.ndarray:
        times = np.atleast_1d(np.asarray(times, dtype=float))
        self.evaluations += times.size
        phi = self.full.at_many(times)
        return system_fidelity_sq_series(self.phi0_sys(times), phi, self.inst.reg)

    def codespace_probability(self, times) -> np.ndarray:
        phi = self.full.at_many(np.atleast_1d(times))
        return np.atleast_1d(codespace_probability(phi, self.inst.fam.system_P, self.inst.reg))


@dataclass(frozen=True)
class ProtectionTime:
    t: float
    crossed: bool
    floor: bool
    scan_times: np.ndarray
    scan_values: np.ndarray

    def to_dict(self) -> dict:
        return {"t_prot": self.t, "crossed": self.crossed, "floor": self.floor}


def protection_time(inst, threshold: float = 0.9, sf: SpectralForm | None = None,
                    t_max: float = DEFAULT_T_MAX, rel_tol: float = 0.01,
                    probe: SystemFidelityProbe | None = None) -> ProtectionTime:
    """First time ``F_s^2`` drops below ``threshold``.

    Scan ``t = 1, 1.3, 1.3^2, ...`` up to ``t_max``.  A crossing is accepted at
    the first scan point from which ``SCAN_WINDOW`` consecutive points all lie
    below threshold, so isolated dips from fluctuations do not trigger it.
    The crossing is then bracketed against the previous scan point and
    bisected to ``rel_tol``.  Without a crossing ``t`` is ``inf``.  If the
    fidelity is already below threshold at ``t = 1`` the bisection runs on
    ``[0, 1]`` and ``floor`` is set.
    """
    probe = probe or SystemFidelityProbe(inst, sf)
    n_scan = int(math.floor(math.log(t_max) / math.log(SCAN_FACTOR))) + 1
    scan_t = SCAN_FACTOR ** np.arange(n_scan)
    scan_f = probe.system_fidelity(scan_t)
    below = scan_f < threshold
    k_cross = None
    for k in range(n_scan):
        if np.all(below[k:k + SCAN_WINDOW]) and k + SCAN_WINDOW <= n_scan:
            k_cross = k
            break
    if k_cross is None:
        return ProtectionTime(float("inf"), False, False, scan_t, scan_f)
    floor = k_cross == 0
    lo = 0.0 if floor else float(scan_t[k_cross - 1])
    hi = float(scan_t[k_cross])
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if probe.system_fidelity(mid)[0] < threshold:
            hi = mid
        else:
            lo = mid
    return ProtectionTime(hi, True, floor, scan_t, scan_f)


@dataclass(frozen=True)
class LongTermResult:
    measured: float
    predicted: float
    values: np.ndarray
    times: np.ndarray


def dephasing_prediction(alpha: complex) -> float:
    """``|alpha|^4 + (1 - |alpha|^2)^2``."""
    p = abs(alpha) ** 2
    return p**2 + (1 - p) ** 2


def plus_minus_state(inst, alpha: complex, beta: complex | None = None) -> np.ndarray:
    """``alpha |+_L> + beta |-_L>`` on the system qubits of a one-logical-qubit instance."""
    if inst.n_logical != 1:
        raise ContractError("the +/- decomposition is defined for one logical qubit")
    if beta is None:
        beta = math.sqrt(max(0.0, 1 - abs(alpha) ** 2))
    if abs(abs(alpha) ** 2 + abs(beta) ** 2 - 1) > 1e-9:
        raise ContractError("|alpha|^2 + |beta|^2 must equal 1")
    plus = np.array([1, 1]) / math.sqrt(2)
    minus = np.array([1, -1]) / math.sqrt(2)
    return as_state(inst.fam.codespace_isometry @ (alpha * plus + beta * minus))


def longterm_fidelity(inst, alpha: complex, times: Sequence[float] = CI_AVERAGING_TIMES,
                      sf: SpectralForm | None = None, beta: complex | None = None,
                      env_state=None) -> LongTermResult:
    """Mean ``F_s^2`` over ``times`` for ``alpha|+_L> + beta|-_L>`` and its dephasing prediction."""
    psi_s = plus_minus_state(inst, alpha, beta)
    probe = SystemFidelityProbe(inst, sf, system_state=psi_s, env_state=env_state)
    times = np.asarray(times, dtype=float)
    vals = probe.system_fidelity(times)
    return LongTermResult(float(vals.mean()), dephasing_prediction(alpha), vals, times)
