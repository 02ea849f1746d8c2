"""Three-level effective model of a dephasing codespace pair.

States ``|+>``, ``|->`` at energies ``+omega``, ``-omega`` couple with
strengths ``lambda_plus``, ``lambda_minus`` to a single penalised level at
``E_P``.  Second-order perturbation theory gives the energy shifts, the
residual transition probability between the two low states and the rate at
which their relative phase drifts.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import ContractError

PERTURBATIVE_RATIO = 0.1


@dataclass(frozen=True)
class ToyModelParams:
    omega: float
    lambda_plus: float
    lambda_minus: float
    e_penalty: float

    def __post_init__(self):
        if self.e_penalty == 0:
            raise ContractError("e_penalty must be non-zero")

    @property
    def perturbative(self) -> bool:
        """``E_P`` well above ``omega`` and the couplings."""
        scale = max(abs(self.omega), abs(self.lambda_plus), abs(self.lambda_minus))
        return scale <= PERTURBATIVE_RATIO * abs(self.e_penalty)

    def hamiltonian(self) -> np.ndarray:
        w, lp, lm, ep = self.omega, self.lambda_plus, self.lambda_minus, self.e_penalty
        return np.array([[w, 0, lp], [0, -w, lm], [lp, lm, ep]], dtype=float)


@dataclass(frozen=True)
class ToyModelResult:
    e_plus: float
    e_minus: float
    exact_eigenvalues: np.ndarray
    transition_ceiling: float
    dephasing_rate: float
    perturbative: bool

    @property
    def exact_low(self) -> tuple[float, float]:
        """Exact eigenvalues adiabatically connected to ``+omega`` and ``-omega``."""
        ev = np.sort(self.exact_eigenvalues)
        # the penalised level is the one nearest E_P; the other two, high first
        far = np.argmax(np.abs(ev - np.mean([self.e_plus, self.e_minus])))
        low = np.delete(ev, far)
        return float(low[1]), float(low[0])

    def to_dict(self) -> dict:
        e_p, e_m = self.exact_low
        return {
            "e_plus": self.e_plus,
            "e_minus": self.e_minus,
            "exact_e_plus": e_p,
            "exact_e_minus": e_m,
            "exact_eigenvalues": [float(x) for x in self.exact_eigenvalues],
            "transition_ceiling": self.transition_ceiling,
            "dephasing_rate": self.dephasing_rate,
            "perturbative": self.perturbative,
        }


def toy_model(params: ToyModelParams) -> ToyModelResult:
    """Perturbative energies, transition ceiling and dephasing rate, plus exact eigenvalues."""
    w, lp, lm, ep = params.omega, params.lambda_plus, params.lambda_minus, params.e_penalty
    if not params.perturbative:
        warnings.warn("toy model outside the perturbative regime (E_P not >> omega, lambda)",
                      stacklevel=2)
    e_plus = w - lp**2 / ep
    e_minus = -w - lm**2 / ep
    if w == 0:
        ceiling = float("inf") if lp * lm else 0.0
    else:
        ceiling = (lp * lm / (w * ep)) ** 2
    rate = (lp**2 - lm**2) / ep
    exact = np.linalg.eigvalsh(params.hamiltonian())
    return ToyModelResult(e_plus, e_minus, exact, float(ceiling), float(rate), params.perturbative)


def toy_transition_probability(params: ToyModelParams, times) -> np.ndarray:
    """Exact ``|<-|exp(-i H t)|+>|^2`` at each time."""
    ev, vec = np.linalg.eigh(params.hamiltonian())
    times = np.asarray(times, dtype=float)
    amp = np.einsum("k,kt,k->t", vec[1], np.exp(-1j * np.outer(ev, times)), vec[0])
    return np.abs(amp) ** 2
