"""Seeded experiment instances: encoded schedule, random environment, coupling, penalty."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .code import CODES, CodeSpec, ProjectorFamily, build_projector_family, encode_hamiltonian
from .errors import ConfigError, ContractError, NumericalContractError
from .pauli import (
    HermitianOperator,
    PauliString,
    QubitRegister,
    as_state,
    dot_sigma,
    embed,
    multiply_sums,
    pauli_to_operator,
    random_state,
)

logger = logging.getLogger(__name__)

COEFF_RANGE = (0.9, 1.1)
GRAPH_DEGREE = 3
GRAPH_RETRIES = 1000
PVP_ATOL = 1e-12

# Fixed stream labels: each sub-build draws from its own generator so that,
# e.g., changing n_env leaves the coupling vectors and coefficients untouched.
_STREAMS = {
    "graph": 101,
    "env_vectors": 102,
    "env_coeffs": 103,
    "coupling_map": 201,
    "coupling_vectors": 202,
    "coupling_coeffs": 203,
    "system_state": 301,
    "env_state": 302,
}


def rng_stream(seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), _STREAMS[label]]))


def unit_vectors(rng: np.random.Generator, k: int) -> np.ndarray:
    """``k`` uniform points on the sphere (normalised Gaussian triples)."""
    v = rng.standard_normal((k, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


# --- configuration --------------------------------------------------------

_CONFIG_FIELDS = {
    "n_logical", "code", "n_env", "seed", "lambda", "e_penalty",
    "h_comp", "initial_system_state", "initial_env_state",
}
_SCHEDULE_FIELDS = {"kind", "endpoints", "total_time"}
_SYSTEM_STATE_KINDS = {"logical_coeffs", "plus_L", "zero_L", "random_codespace"}


def _require_fields(d: Mapping, expected: set, where: str):
    if not isinstance(d, Mapping):
        raise ConfigError(f"{where} must be an object")
    missing = expected - set(d)
    unknown = set(d) - expected
    if missing:
        raise ConfigError(f"{where}: missing field(s) {sorted(missing)}")
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {sorted(unknown)}")


def parse_pauli_terms(terms: Sequence, n_logical: int, where: str = "endpoint") -> tuple[PauliString, ...]:
    """``[[coeff, "XZ"], ...]`` to Pauli strings on logical qubits ``0..n-1`` (leftmost = 0)."""
    out = []
    if not isinstance(terms, (list, tuple)):
        raise ConfigError(f"{where} must be a list of [coefficient, label] pairs")
    for term in terms:
        if not (isinstance(term, (list, tuple)) and len(term) == 2):
            raise ConfigError(f"{where}: bad term {term!r}")
        coeff, label = term
        if not isinstance(coeff, (int, float)) or isinstance(coeff, bool):
            raise ConfigError(f"{where}: coefficient must be a real number, got {coeff!r}")
        if not isinstance(label, str) or len(label) != n_logical or set(label.upper()) - set("IXYZ"):
            raise ConfigError(f"{where}: label {label!r} must be {n_logical} characters from IXYZ")
        out.append(PauliString.from_label(label, range(n_logical), float(coeff)))
    return tuple(out)


def _terms_to_json(terms: Sequence[PauliString], n_logical: int) -> list:
    out = []
    for t in terms:
        label = ["I"] * n_logical
        for q, op in t.factors:
            label[q] = op
        out.append([t.coefficient.real, "".join(label)])
    return out


@dataclass(frozen=True)
class Schedule:
    """Logical computational Hamiltonian over time.

    ``constant`` uses ``endpoints[0]`` at all times and ignores
    ``total_time``; ``linear_interpolation`` is
    ``(1 - t/T) H_A + (t/T) H_B``.
    """

    kind: str
    endpoints: tuple[tuple[PauliString, ...], ...]
    total_time: float | None = None

    def __post_init__(self):
        if self.kind == "constant":
            if len(self.endpoints) not in (1, 2):
                raise ConfigError("constant schedule takes one endpoint")
        elif self.kind == "linear_interpolation":
            if len(self.endpoints) != 2:
                raise ConfigError("linear_interpolation needs exactly two endpoints")
            if self.total_time is None or not self.total_time > 0:
                raise ConfigError("linear_interpolation needs total_time > 0")
        else:
            raise ConfigError(f"unknown schedule kind {self.kind!r}")

    @property
    def time_independent(self) -> bool:
        return self.kind == "constant"

    def weights(self, t: float) -> tuple[float, float]:
        if self.kind == "constant":
            return 1.0, 0.0
        s = float(t) / self.total_time
        return 1.0 - s, s


@dataclass(frozen=True)
class ModelConfig:
    """Validated experiment configuration; mirrors the JSON schema field for field."""

    n_logical: int
    code: str
    n_env: int
    seed: int
    lam: float
    e_penalty: float
    h_comp: Mapping[str, Any]
    initial_system_state: Mapping[str, Any]
    initial_env_state: str

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelConfig":
        _require_fields(d, _CONFIG_FIELDS, "config")
        for key in ("n_logical", "n_env", "seed"):
            if not isinstance(d[key], int) or isinstance(d[key], bool):
                raise ConfigError(f"config.{key} must be an integer")
        for key in ("lambda", "e_penalty"):
            if not isinstance(d[key], (int, float)) or isinstance(d[key], bool):
                raise ConfigError(f"config.{key} must be a number")
        if d["n_logical"] < 1:
            raise ConfigError("config.n_logical must be >= 1")
        if d["code"] not in CODES:
            raise ConfigError(f"config.code must be one of {sorted(CODES)}")
        n_env = d["n_env"]
        if n_env < 0 or n_env % 2:
            raise ConfigError("config.n_env must be a non-negative even integer")
        _require_fields(d["h_comp"], _SCHEDULE_FIELDS, "config.h_comp")
        hc = d["h_comp"]
        if not isinstance(hc["endpoints"], list) or not hc["endpoints"]:
            raise ConfigError("config.h_comp.endpoints must be a non-empty list")
        for i, ep in enumerate(hc["endpoints"]):
            parse_pauli_terms(ep, d["n_logical"], f"config.h_comp.endpoints[{i}]")
        total = hc["total_time"]
        if total is not None and (not isinstance(total, (int, float)) or isinstance(total, bool)):
            raise ConfigError("config.h_comp.total_time must be a number or null")
        _build_schedule(hc, d["n_logical"])
        _require_fields(d["initial_system_state"], {"kind", "coeffs"}, "config.initial_system_state")
        iss = d["initial_system_state"]
        if iss["kind"] not in _SYSTEM_STATE_KINDS:
            raise ConfigError(f"config.initial_system_state.kind must be one of {sorted(_SYSTEM_STATE_KINDS)}")
        if iss["kind"] == "logical_coeffs":
            _logical_coeffs(iss["coeffs"], d["n_logical"])
        if d["initial_env_state"] != "random":
            raise ConfigError('config.initial_env_state must be "random"')
        return cls(
            n_logical=d["n_logical"],
            code=d["code"],
            n_env=n_env,
            seed=d["seed"],
            lam=float(d["lambda"]),
            e_penalty=float(d["e_penalty"]),
            h_comp=json.loads(json.dumps(hc)),
            initial_system_state=json.loads(json.dumps(iss)),
            initial_env_state=d["initial_env_state"],
        )

    def to_dict(self) -> dict:
        return {
            "n_logical": self.n_logical,
            "code": self.code,
            "n_env": self.n_env,
            "seed": self.seed,
            "lambda": self.lam,
            "e_penalty": self.e_penalty,
            "h_comp": json.loads(json.dumps(self.h_comp)),
            "initial_system_state": json.loads(json.dumps(self.initial_system_state)),
            "initial_env_state": self.initial_env_state,
        }

    def replace(self, **changes) -> "ModelConfig":
        d = self.to_dict()
        for key, value in changes.items():
            d["lambda" if key == "lam" else key] = value
        return ModelConfig.from_dict(d)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def default_config(**overrides) -> ModelConfig:
    """One JFS logical qubit, 8 environment qubits, ``H_comp = X_L``, random codespace state."""
    d = {
        "n_logical": 1,
        "code": "jfs4",
        "n_env": 8,
        "seed": 0,
        "lambda": 0.1,
        "e_penalty": 0.0,
        "h_comp": {"kind": "constant", "endpoints": [[[1.0, "X"]]], "total_time": None},
        "initial_system_state": {"kind": "random_codespace", "coeffs": None},
        "initial_env_state": "random",
    }
    for key, value in overrides.items():
        d["lambda" if key == "lam" else key] = value
    return ModelConfig.from_dict(d)


def _build_schedule(hc: Mapping, n_logical: int) -> Schedule:
    eps = tuple(parse_pauli_terms(ep, n_logical) for ep in hc["endpoints"])
    total = hc["total_time"]
    return Schedule(hc["kind"], eps, None if total is None else float(total))


def _logical_coeffs(coeffs, n_logical: int) -> np.ndarray:
    if not isinstance(coeffs, list) or len(coeffs) != 2**n_logical:
        raise ConfigError(f"logical_coeffs needs {2**n_logical} [re, im] pairs")
    try:
        v = np.array([complex(re, im) for re, im in coeffs])
    except (TypeError, ValueError):
        raise ConfigError("logical_coeffs entries must be [re, im] number pairs") from None
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > 1e-6:
        raise ConfigError(f"logical_coeffs must be normalised (|c| = {norm:.8f})")
    return v / norm


# --- environment and coupling ---------------------------------------------

def random_regular_graph(n: int, rng: np.random.Generator, degree: int = GRAPH_DEGREE,
                         retries: int = GRAPH_RETRIES) -> list[tuple[int, int]]:
    """Simple ``degree``-regular graph from the pairing model with rejection."""
    if (n * degree) % 2:
        raise ContractError(f"no {degree}-regular graph on {n} vertices")
    for _ in range(retries):
        stubs = rng.permutation(np.repeat(np.arange(n), degree))
        pairs = stubs.reshape(-1, 2)
        edges = {tuple(sorted(map(int, p))) for p in pairs}
        if np.all(pairs[:, 0] != pairs[:, 1]) and len(edges) == len(pairs):
            return sorted(edges)
    raise ContractError(f"pairing model failed to produce a simple graph after {retries} tries")


def is_connected(n: int, edges: Sequence[tuple[int, int]]) -> bool:
    if n == 0:
        return True
    adj = {i: set() for i in range(n)}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    seen, stack = {0}, [0]
    while stack:
        for nb in adj[stack.pop()] - seen:
            seen.add(nb)
            stack.append(nb)
    return len(seen) == n


@dataclass(frozen=True)
class Environment:
    n_env: int
    edges: tuple[tuple[int, int], ...]
    connected: bool
    terms: tuple[PauliString, ...]
    draws: Mapping[str, np.ndarray] = field(repr=False)
    H_env: HermitianOperator = field(repr=False)


def build_environment(n_env: int, seed: int, coefficient_scale: float = 1.0) -> Environment:
    """Random two-local environment on a 3-regular interaction graph.

    ``H_env = sum_a alpha_a (n_a . sigma^a) + sum_<bc> alpha_bc (m_b . sigma^b)(l_c . sigma^c)``
    with uniform unit vectors and coefficients uniform in ``[0.9, 1.1]``.
    ``H_env`` acts on an environment-only register with labels ``e0..``.
    ``n_env = 2`` is the single-edge graph, since no 3-regular graph exists
    below four vertices.  ``coefficient_scale`` multiplies every coefficient
    (set it to 0 to get the zero operator in tests).
    """
    if n_env < 2 or n_env % 2:
        raise ContractError(f"n_env must be even and >= 2, got {n_env}")
    try:
        if n_env == 2:
            edges = [(0, 1)]
        else:
            edges = random_regular_graph(n_env, rng_stream(seed, "graph"))
    except ContractError as exc:
        raise ContractError(f"{exc} (seed={seed})") from None
    vec_rng = rng_stream(seed, "env_vectors")
    n_hat = unit_vectors(vec_rng, n_env)
    m_hat = unit_vectors(vec_rng, len(edges))
    l_hat = unit_vectors(vec_rng, len(edges))
    coef_rng = rng_stream(seed, "env_coeffs")
    alpha_single = coef_rng.uniform(*COEFF_RANGE, size=n_env) * coefficient_scale
    alpha_edge = coef_rng.uniform(*COEFF_RANGE, size=len(edges)) * coefficient_scale

    terms: list[PauliString] = []
    for a in range(n_env):
        terms += [alpha_single[a] * p for p in dot_sigma(n_hat[a], f"e{a}")]
    for k, (b, c) in enumerate(edges):
        terms += [alpha_edge[k] * p for p in multiply_sums(dot_sigma(m_hat[k], f"e{b}"),
                                                           dot_sigma(l_hat[k], f"e{c}"))]
    reg = QubitRegister((), tuple(f"e{i}" for i in range(n_env)))
    H = pauli_to_operator(terms, reg, hermitian=True)
    draws = {"n_hat": n_hat, "m_hat": m_hat, "l_hat": l_hat,
             "alpha_single": alpha_single, "alpha_edge": alpha_edge}
    return Environment(n_env, tuple(edges), is_connected(n_env, edges), tuple(terms), draws, H)


def draw_couplings_map(reg: QubitRegister, seed: int) -> dict:
    """Each system qubit gets a distinct random environment qubit.

    When the environment is smaller than the system the map cannot be
    injective; environment qubits are then shared as evenly as possible.
    """
    n_s, n_e = reg.n_system, reg.n_environment
    if n_e == 0:
        return {}
    rng = rng_stream(seed, "coupling_map")
    if n_e >= n_s:
        picks = rng.choice(n_e, size=n_s, replace=False)
    else:
        picks = rng.permutation(np.resize(np.arange(n_e), n_s))
    return {reg.system[w]: reg.environment[int(e)] for w, e in enumerate(picks)}


@dataclass(frozen=True)
class Coupling:
    couplings_map: Mapping
    terms: tuple[PauliString, ...]
    V: HermitianOperator = field(repr=False)
    draws: Mapping[str, np.ndarray] = field(repr=False)


def build_coupling(reg: QubitRegister, couplings_map: Mapping, seed: int,
                   beta_scale: float = 1.0, gamma_scale: float = 1.0,
                   allow_shared: bool = False) -> Coupling:
    """One-local system coupling ``V``.

    ``V = sum_w beta_w (n_w . sigma^w) + sum_w gamma_w (m_w . sigma^w)(l_w . sigma^{env(w)})``,
    ``env(w) = couplings_map[w]``.  Without environment qubits only the pure
    system-error terms remain.  Draw shapes depend only on the system size.
    """
    env_targets = list(couplings_map.values())
    if reg.n_environment:
        if set(couplings_map) != set(reg.system):
            raise ContractError("couplings_map must assign every system qubit")
        if not allow_shared and len(set(env_targets)) != len(env_targets):
            raise ContractError("couplings_map must be injective")
        for e in env_targets:
            if e not in reg.environment:
                raise ContractError(f"couplings_map targets unknown environment qubit {e!r}")
    elif couplings_map:
        raise ContractError("couplings_map given for a register without environment")

    n_s = reg.n_system
    vec_rng = rng_stream(seed, "coupling_vectors")
    n_hat = unit_vectors(vec_rng, n_s)
    m_hat = unit_vectors(vec_rng, n_s)
    l_hat = unit_vectors(vec_rng, n_s)
    coef_rng = rng_stream(seed, "coupling_coeffs")
    beta = coef_rng.uniform(*COEFF_RANGE, size=n_s) * beta_scale
    gamma = coef_rng.uniform(*COEFF_RANGE, size=n_s) * gamma_scale

    terms: list[PauliString] = []
    for w, label in enumerate(reg.system):
        terms += [beta[w] * p for p in dot_sigma(n_hat[w], label)]
        if reg.n_environment:
            terms += [gamma[w] * p for p in multiply_sums(dot_sigma(m_hat[w], label),
                                                          dot_sigma(l_hat[w], couplings_map[label]))]
    terms = [t for t in terms if t.coefficient != 0]
    V = pauli_to_operator(terms, reg, hermitian=True)
    draws = {"n_hat": n_hat, "m_hat": m_hat, "l_hat": l_hat, "beta": beta, "gamma": gamma}
    return Coupling(dict(couplings_map), tuple(terms), V, draws)


# --- assembled instance ---------------------------------------------------

@dataclass(frozen=True)
class ModelInstance:
    """Materialised ``H(t) = H_comp^L(t) + H_env + lambda V + E_P Q~``.

    System-only pieces (``h_sys_endpoints``, ``env.H_env``) are kept alongside
    the full-register operators so the coupling-free evolution can be run
    factorised.
    """

    config: ModelConfig
    code: CodeSpec
    reg: QubitRegister
    schedule: Schedule
    fam: ProjectorFamily
    env: Environment | None
    coupling: Coupling
    lam: float
    e_penalty: float
    h_sys_endpoints: tuple[np.ndarray, ...] = field(repr=False)
    config_hash: str = ""

    @property
    def seed(self) -> int:
        return self.config.seed

    @property
    def n_logical(self) -> int:
        return self.fam.n_logical

    @property
    def V(self) -> HermitianOperator:
        return self.coupling.V

    @property
    def time_independent(self) -> bool:
        return self.schedule.time_independent

    @cached_property
    def V_parts(self) -> tuple[HermitianOperator, ...]:
        """``V = sum_i V_i`` grouped by the logical block each term touches."""
        parts = []
        for i in range(self.n_logical):
            block = set(self.fam.block_qubits(i))
            terms = [t for t in self.coupling.terms if t.weight(block) > 0]
            parts.append(pauli_to_operator(terms, self.reg, hermitian=True))
        return tuple(parts)

    @cached_property
    def H_env_full(self) -> sp.csr_matrix:
        if self.env is None:
            return sp.csr_matrix((self.reg.dim, self.reg.dim), dtype=complex)
        return embed(self.env.H_env.matrix, self.reg.system_dim, 1)

    @cached_property
    def _h_comp_full(self) -> tuple[sp.csr_matrix, ...]:
        return tuple(embed(h, 1, self.reg.env_dim) for h in self.h_sys_endpoints)

    def h_sys(self, t: float = 0.0) -> np.ndarray:
        """Encoded computational Hamiltonian on the system qubits only (dense)."""
        wa, wb = self.schedule.weights(t)
        out = wa * self.h_sys_endpoints[0]
        if wb:
            out = out + wb * self.h_sys_endpoints[1]
        return out

    def h_env_dense(self) -> np.ndarray:
        if self.env is None:
            return np.zeros((1, 1), dtype=complex)
        return self.env.H_env.toarray()

    def H0(self, t: float = 0.0) -> HermitianOperator:
        wa, wb = self.schedule.weights(t)
        m = wa * self._h_comp_full[0] + self.H_env_full
        if wb:
            m = m + wb * self._h_comp_full[1]
        return HermitianOperator(m)

    @cached_property
    def _static_part(self) -> sp.csr_matrix:
        return (self.H_env_full + self.lam * self.V.matrix
                + self.e_penalty * self.fam.penalty_Q.matrix).tocsr()

    def H(self, t: float = 0.0) -> HermitianOperator:
        wa, wb = self.schedule.weights(t)
        m = self._static_part + wa * self._h_comp_full[0]
        if wb:
            m = m + wb * self._h_comp_full[1]
        return HermitianOperator(m)

    def H_matrix(self, t: float = 0.0) -> sp.csr_matrix:
        """Unchecked sparse ``H(t)``, for inner loops."""
        wa, wb = self.schedule.weights(t)
        m = self._static_part + wa * self._h_comp_full[0]
        if wb:
            m = m + wb * self._h_comp_full[1]
        return m

    def with_params(self, lam: float | None = None, e_penalty: float | None = None) -> "ModelInstance":
        """Same environment, coupling and states with different ``lambda`` / ``E_P``."""
        lam = self.lam if lam is None else float(lam)
        ep = self.e_penalty if e_penalty is None else float(e_penalty)
        cfg = self.config.replace(lam=lam, e_penalty=ep)
        return dataclasses.replace(self, config=cfg, lam=lam, e_penalty=ep, config_hash=cfg.hash())

    # initial states

    def system_state(self) -> np.ndarray:
        iss = self.config.initial_system_state
        n = self.n_logical
        kind = iss["kind"]
        if kind == "logical_coeffs":
            coeffs = _logical_coeffs(iss["coeffs"], n)
        elif kind == "zero_L":
            coeffs = np.zeros(2**n, dtype=complex)
            coeffs[0] = 1.0
        elif kind == "plus_L":
            coeffs = np.full(2**n, 2 ** (-n / 2), dtype=complex)
        else:
            coeffs = random_state(2**n, rng_stream(self.seed, "system_state"))
        return as_state(self.fam.codespace_isometry @ coeffs)

    def logical_coefficients(self) -> np.ndarray:
        """Initial system state expressed in the logical basis."""
        return self.fam.codespace_isometry.conj().T @ self.system_state()

    def env_state(self) -> np.ndarray:
        if self.env is None:
            return as_state([1.0])
        return random_state(self.reg.env_dim, rng_stream(self.seed, "env_state"))

    def initial_state(self) -> np.ndarray:
        return as_state(np.kron(self.system_state(), self.env_state()))


def assemble(config: ModelConfig | Mapping) -> ModelInstance:
    """Build every operator for one seeded configuration and check the model invariants."""
    if not isinstance(config, ModelConfig):
        config = ModelConfig.from_dict(config)
    code = CODES[config.code]()
    n = config.n_logical
    reg = QubitRegister.build(code.ell * n, config.n_env)
    env = build_environment(config.n_env, config.seed) if config.n_env else None
    if env is not None:
        degrees = np.bincount(np.array(env.edges).ravel(), minlength=config.n_env)
        expected = 1 if config.n_env == 2 else GRAPH_DEGREE
        if not np.all(degrees == expected):
            raise NumericalContractError(f"environment graph is not {expected}-regular")
    cmap = draw_couplings_map(reg, config.seed)
    coupling = build_coupling(reg, cmap, config.seed,
                              allow_shared=0 < reg.n_environment < reg.n_system)
    fam = build_projector_family(code, n, reg)
    schedule = _build_schedule(config.h_comp, n)
    h_sys = tuple(encode_hamiltonian(ep, code, n).toarray() for ep in schedule.endpoints)

    env_labels = set(reg.environment)
    for t in coupling.terms:
        if t.weight(reg.system) != 1 or t.weight(env_labels) > 1:
            raise NumericalContractError(f"coupling term {t} is not one-local on the system")
    P = fam.total_P.matrix
    pvp = P @ coupling.V.matrix @ P
    pvp_max = abs(pvp).max() if pvp.nnz else 0.0
    if pvp_max > PVP_ATOL:
        raise NumericalContractError(f"PVP != 0 (max entry {pvp_max:.3e})")

    return ModelInstance(
        config=config,
        code=code,
        reg=reg,
        schedule=schedule,
        fam=fam,
        env=env,
        coupling=coupling,
        lam=config.lam,
        e_penalty=config.e_penalty,
        h_sys_endpoints=h_sys,
        config_hash=config.hash(),
    )
