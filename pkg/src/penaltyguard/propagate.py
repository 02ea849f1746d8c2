"""Exact time evolution.

Two routes:

* spectral: one dense eigendecomposition, then ``U diag(exp(-iEt)) U^H s``
  at any ``t`` (including very late times) for ``O(dim^2)`` per time;
* stepped: piecewise-constant Hamiltonian frozen at each step midpoint,
  with a Chebyshev expansion of the exponential action per step and global
  step-halving until successive refinements agree.

Norms are never renormalised; drift beyond tolerance raises.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import jv

from .errors import ContractError, NumericalContractError, StiffnessError
from .pauli import HermitianOperator, as_state

logger = logging.getLogger(__name__)

DENSE_LIMIT = 8192
SPECTRAL_TOL = 1e-10
MIN_STEP = 1e-12
# largest half-width * dt handled by one Chebyshev expansion; longer steps are split
MAX_CHEBYSHEV_ARG = 500.0


@dataclass(frozen=True)
class PropagatorSettings:
    method: str = "spectral"
    dt_max: float = 1.0
    unitarity_tol: float = 1e-9
    substep_expansion_order: int | None = None
    refine_tol: float = 1e-8
    dense_limit: int = DENSE_LIMIT

    def __post_init__(self):
        if self.method not in ("spectral", "stepped"):
            raise ContractError(f"unknown propagation method {self.method!r}")
        if not self.dt_max > 0:
            raise ContractError("dt_max must be positive")
        if not self.unitarity_tol >= 1e-12:
            raise ContractError("unitarity_tol must be >= 1e-12")
        if self.substep_expansion_order is not None and self.substep_expansion_order < 1:
            raise ContractError("substep_expansion_order must be >= 1")


DEFAULT_SETTINGS = PropagatorSettings()


def matrix_hash(m) -> str:
    h = hashlib.sha1()
    if sp.issparse(m):
        m = sp.csr_matrix(m)
        m.sort_indices()
        for arr in (m.data, m.indices, m.indptr):
            h.update(np.ascontiguousarray(arr).tobytes())
    else:
        h.update(np.ascontiguousarray(m).tobytes())
    h.update(str(m.shape).encode())
    return h.hexdigest()


@dataclass(frozen=True)
class SpectralForm:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)
    source_hash: str = ""
    reconstruction_residual: float = 0.0
    unitarity_residual: float = 0.0

    @property
    def dim(self) -> int:
        return self.eigenvalues.size


def _unitarity_residual(w: np.ndarray) -> float:
    n = w.shape[0]
    if n <= 512:
        return float(np.abs(w.conj().T @ w - np.eye(n)).max())
    # probe-based: |W^H W x - x| for a few fixed random vectors
    rng = np.random.default_rng(7)
    x = rng.standard_normal((n, 4)) + 1j * rng.standard_normal((n, 4))
    x /= np.linalg.norm(x, axis=0)
    return float(np.abs(w.conj().T @ (w @ x) - x).max())


def diagonalize(h, source_hash: str | None = None, dense_limit: int = DENSE_LIMIT) -> SpectralForm:
    """Full eigendecomposition of a Hermitian operator, eigenvalues ascending.

    Refuses operators above ``dense_limit``; use :func:`evolve_stepped` there.
    """
    if isinstance(h, HermitianOperator):
        if not h.hermitian:
            raise ContractError("diagonalize needs a Hermitian operator")
        m = h.matrix
    else:
        m = h
    dim = m.shape[0]
    if dim > dense_limit:
        raise ContractError(
            f"dimension {dim} exceeds the dense limit {dense_limit}; use the stepped propagator"
        )
    if source_hash is None:
        source_hash = matrix_hash(m)
    dense = m.toarray() if sp.issparse(m) else np.array(m, dtype=complex)
    hnorm = np.linalg.norm(dense)
    evals, evecs = sla.eigh(dense, driver="evr", overwrite_a=True, check_finite=False)
    del dense
    resid = m @ evecs - evecs * evals
    recon = float(np.linalg.norm(resid) / (hnorm if hnorm > 0 else 1.0))
    del resid
    unit = _unitarity_residual(evecs)
    if recon > SPECTRAL_TOL or unit > SPECTRAL_TOL:
        raise NumericalContractError(
            f"eigendecomposition failed checks: reconstruction {recon:.2e}, unitarity {unit:.2e}"
        )
    return SpectralForm(evals, evecs, source_hash, recon, unit)


def _check_norm(v: np.ndarray, tol: float, what: str):
    norms = np.linalg.norm(v, axis=-1)
    drift = float(np.max(np.abs(norms - 1.0)))
    if drift > tol:
        raise NumericalContractError(f"{what}: norm drift {drift:.3e} exceeds {tol:g}")


class SpectralPropagator:
    """Evolution of one fixed initial state under a :class:`SpectralForm`."""

    def __init__(self, sf: SpectralForm, s, unitarity_tol: float = DEFAULT_SETTINGS.unitarity_tol):
        s = as_state(s, sf.dim)
        self.sf = sf
        self.coeffs = sf.eigenvectors.conj().T @ s
        self.unitarity_tol = unitarity_tol

    def at(self, t: float) -> np.ndarray:
        return self.at_many([t])[0]

    def at_many(self, times: Sequence[float], chunk: int = 128) -> np.ndarray:
        """States at each time as rows of a ``(len(times), dim)`` array."""
        times = np.asarray(times, dtype=float)
        out = np.empty((times.size, self.sf.dim), dtype=complex)
        w, e = self.sf.eigenvectors, self.sf.eigenvalues
        for lo in range(0, times.size, chunk):
            tt = times[lo:lo + chunk]
            phases = np.exp(-1j * np.outer(e, tt)) * self.coeffs[:, None]
            out[lo:lo + chunk] = (w @ phases).T
        _check_norm(out, self.unitarity_tol, "spectral evolution")
        return out


def evolve_spectral(sf: SpectralForm, s, t: float,
                    settings: PropagatorSettings = DEFAULT_SETTINGS) -> np.ndarray:
    """``U exp(-i diag(E) t) U^H s``."""
    return SpectralPropagator(sf, s, settings.unitarity_tol).at(t)


# --- stepped --------------------------------------------------------------

def gershgorin_bounds(m) -> tuple[float, float]:
    """Interval containing the spectrum of a Hermitian matrix."""
    if sp.issparse(m):
        m = sp.csr_matrix(m)
        diag = m.diagonal().real
        radius = np.asarray(abs(m).sum(axis=1)).ravel() - np.abs(diag)
    else:
        diag = np.real(np.diag(m))
        radius = np.abs(m).sum(axis=1) - np.abs(diag)
    return float(np.min(diag - radius)), float(np.max(diag + radius))


def lanczos_bounds(m, margin: float = 1e-5) -> tuple[float, float]:
    """Extreme eigenvalues by Lanczos, widened by ``margin`` times the width."""
    dim = m.shape[0]
    if dim <= 256:
        d = m.toarray() if sp.issparse(m) else np.asarray(m)
        ev = np.linalg.eigvalsh(d)
        lo, hi = float(ev[0]), float(ev[-1])
    else:
        v0 = np.random.default_rng(11).standard_normal(dim).astype(complex)
        hi = float(spla.eigsh(m, k=1, which="LA", v0=v0, tol=1e-8, return_eigenvectors=False)[0])
        lo = float(spla.eigsh(m, k=1, which="SA", v0=v0, tol=1e-8, return_eigenvectors=False)[0])
    pad = margin * max(hi - lo, 1.0)
    return lo - pad, hi + pad


def chebyshev_order(z: float, tol: float = 1e-15) -> int:
    """Smallest order past ``z`` whose Bessel tail is below ``tol``."""
    kmax = int(z + 12 * max(z, 1.0) ** (1 / 3) + 40)
    coeffs = np.abs(jv(np.arange(kmax + 2), z))
    for k in range(int(z), kmax):
        if coeffs[k] < tol and coeffs[k + 1] < tol:
            return max(k, 1)
    return kmax


def chebyshev_step(h, psi: np.ndarray, dt: float, bounds: tuple[float, float],
                   order: int | None = None) -> tuple[np.ndarray, int]:
    """``exp(-i h dt) psi`` for ``h`` with spectrum inside ``bounds``.

    Returns the new state and the number of matrix-vector products used.
    """
    lo, hi = bounds
    centre = 0.5 * (hi + lo)
    half = max(0.5 * (hi - lo), 1e-14)
    z = half * dt
    k_max = order if order is not None else chebyshev_order(z)
    coef = jv(np.arange(k_max + 1), z) * (-1j) ** np.arange(k_max + 1)
    coef[1:] *= 2

    def hn(x):
        return (h @ x - centre * x) / half

    t_prev = psi
    t_cur = hn(psi)
    out = coef[0] * t_prev + coef[1] * t_cur
    for k in range(2, k_max + 1):
        t_next = 2 * hn(t_cur) - t_prev
        out += coef[k] * t_next
        t_prev, t_cur = t_cur, t_next
    return np.exp(-1j * centre * dt) * out, k_max


@dataclass
class SteppedInfo:
    steps: int = 0
    refinements: int = 0
    matvecs: int = 0
    final_deficit: float = 0.0


def overlap_deficit(a: np.ndarray, b: np.ndarray) -> float:
    return float(max(0.0, 1.0 - abs(np.vdot(a, b)) ** 2))


def evolve_stepped(
    hamiltonian,
    s,
    t0: float,
    t1: float,
    settings: PropagatorSettings = DEFAULT_SETTINGS,
    time_independent: bool | None = None,
    bounds: tuple[float, float] | Callable[[float], tuple[float, float]] | None = None,
    return_info: bool = False,
):
    """Evolve ``s`` from ``t0`` to ``t1`` under ``hamiltonian``.

    ``hamiltonian`` is a matrix / :class:`HermitianOperator` (constant) or a
    callable ``t -> matrix``.  Each step uses ``H`` frozen at the step
    midpoint.  For time-dependent input the whole interval is re-run with
    half the step until the overlap deficit between successive refinements
    is below ``refine_tol * (t1 - t0)``.  ``bounds`` (fixed or per time)
    must enclose the spectrum; Gershgorin discs are used when omitted.
    """
    if t1 < t0:
        raise ContractError(f"t1 ({t1}) must be >= t0 ({t0})")
    psi0 = np.array(s, dtype=complex)
    if abs(np.linalg.norm(psi0) - 1) > settings.unitarity_tol:
        raise ContractError("initial state is not normalised")
    if callable(hamiltonian) and not isinstance(hamiltonian, HermitianOperator) \
            and not sp.issparse(hamiltonian) and not isinstance(hamiltonian, np.ndarray):
        h_of_t = hamiltonian
        if time_independent is None:
            time_independent = False
    else:
        fixed = hamiltonian.matrix if isinstance(hamiltonian, HermitianOperator) else hamiltonian
        h_of_t = lambda t: fixed  # noqa: E731
        time_independent = True

    info = SteppedInfo()
    span = t1 - t0
    if span == 0:
        out = as_state(psi0, check_norm=False)
        return (out, info) if return_info else out

    def bounds_at(t, m):
        if bounds is None:
            return gershgorin_bounds(m)
        return bounds(t) if callable(bounds) else bounds

    def run(n_steps):
        dt = span / n_steps
        psi = psi0
        for k in range(n_steps):
            tm = t0 + (k + 0.5) * dt
            m = h_of_t(tm)
            lo, hi = bounds_at(tm, m)
            n_sub = max(1, math.ceil(0.5 * (hi - lo) * dt / MAX_CHEBYSHEV_ARG))
            for _ in range(n_sub):
                psi, used = chebyshev_step(m, psi, dt / n_sub, (lo, hi), settings.substep_expansion_order)
                info.matvecs += used
            if k % 64 == 63:
                _check_norm(psi, settings.unitarity_tol, "stepped evolution")
        _check_norm(psi, settings.unitarity_tol, "stepped evolution")
        info.steps = n_steps
        return psi

    n = max(1, math.ceil(span / settings.dt_max))
    current = run(n)
    if not time_independent:
        target = settings.refine_tol * span
        while True:
            if span / (2 * n) < MIN_STEP:
                m = h_of_t(t0)
                lo, hi = gershgorin_bounds(m)
                raise StiffnessError(
                    f"step size underflow below {MIN_STEP:g} at t={t0}; local |H| <= {max(abs(lo), abs(hi)):.3e}"
                )
            n *= 2
            refined = run(n)
            info.refinements += 1
            info.final_deficit = overlap_deficit(current, refined)
            current = refined
            if info.final_deficit < target:
                break
    out = current
    return (out, info) if return_info else out


# --- paired trajectories --------------------------------------------------

@dataclass
class Trajectory:
    """Full-``H`` states and coupling-free factors on a common time grid.

    ``phi[k]`` is the state at ``times[k]``; the coupling-free state is
    ``kron(phi0_sys[k], phi0_env[k])``.
    """

    times: np.ndarray
    phi: np.ndarray
    phi0_sys: np.ndarray
    phi0_env: np.ndarray

    def phi0(self, k: int) -> np.ndarray:
        return np.kron(self.phi0_sys[k], self.phi0_env[k])


def _small_spectral_series(h: np.ndarray, s: np.ndarray, times: np.ndarray) -> np.ndarray:
    evals, evecs = np.linalg.eigh(h)
    c = evecs.conj().T @ s
    return (evecs @ (np.exp(-1j * np.outer(evals, times)) * c[:, None])).T


def _stepped_series(h_of_t, s, times, settings, time_independent, bounds) -> np.ndarray:
    out = np.empty((len(times), len(s)), dtype=complex)
    psi, t_prev = np.array(s, dtype=complex), 0.0
    for k, t in enumerate(times):
        psi = np.array(evolve_stepped(h_of_t, psi, t_prev, t, settings,
                                      time_independent=time_independent, bounds=bounds))
        out[k] = psi
        t_prev = t
    return out


def evolve_pair(inst, times: Sequence[float], system_state=None, env_state=None,
                settings: PropagatorSettings | None = None, spectral: SpectralForm | None = None,
                require_codespace: bool = True) -> Trajectory:
    """``phi(t) = U(t) psi`` and ``phi_0(t) = U_0(t) psi`` for ``psi = psi_s (x) psi_e``.

    The coupling-free evolution is run factor by factor on the system and
    environment.  The full evolution is spectral for time-independent
    instances (reusing ``spectral`` when given) and stepped otherwise.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ContractError("times must be a non-decreasing 1-D grid of non-negative values")
    psi_s = inst.system_state() if system_state is None else as_state(system_state, inst.reg.system_dim)
    psi_e = inst.env_state() if env_state is None else as_state(env_state, inst.reg.env_dim)
    if require_codespace:
        leak = float(np.linalg.norm(inst.fam.system_penalty_Q @ psi_s))
        if leak > 1e-9:
            raise ContractError(f"initial system state is outside the codespace: |Q~ psi| = {leak:.3e}")
    if settings is None:
        settings = DEFAULT_SETTINGS if inst.time_independent else PropagatorSettings(method="stepped")
    psi = as_state(np.kron(psi_s, psi_e))

    if inst.env is None:
        phi0_env = np.ones((times.size, 1), dtype=complex)
    else:
        phi0_env = _small_spectral_series(inst.h_env_dense(), psi_e, times)

    if inst.time_independent:
        phi0_sys = _small_spectral_series(inst.h_sys(0.0), psi_s, times)
    else:
        sys_bounds = _affine_bounds(inst.h_sys, inst.schedule.total_time)
        phi0_sys = _stepped_series(inst.h_sys, psi_s, times, settings, False, sys_bounds)

    if inst.time_independent and settings.method == "spectral":
        sf = spectral if spectral is not None else diagonalize(inst.H(), inst.config_hash,
                                                               settings.dense_limit)
        phi = SpectralPropagator(sf, psi, settings.unitarity_tol).at_many(times)
    elif inst.time_independent:
        H = inst.H_matrix(0.0)
        phi = _stepped_series(H, psi, times, settings, True, lanczos_bounds(H))
    else:
        full_bounds = _affine_bounds(inst.H_matrix, inst.schedule.total_time)
        phi = _stepped_series(inst.H_matrix, psi, times, settings, False, full_bounds)
    return Trajectory(times, phi, phi0_sys, phi0_env)


def _affine_bounds(h_of_t, total_time: float) -> Callable[[float], tuple[float, float]]:
    """Spectral bounds for ``H(t)`` affine in ``t``.

    ``lambda_max`` is convex and ``lambda_min`` concave in the matrix, so
    the endpoint bounds interpolate to valid bounds at any intermediate time.
    """
    lo0, hi0 = lanczos_bounds(h_of_t(0.0))
    lo1, hi1 = lanczos_bounds(h_of_t(total_time))

    def at(t):
        s = min(max(t / total_time, 0.0), 1.0)
        return (1 - s) * lo0 + s * lo1, (1 - s) * hi0 + s * hi1

    return at
