import json

import numpy as np
import pytest

from penaltyguard.errors import ConfigError, ContractError
from penaltyguard.model import (
    COEFF_RANGE,
    ModelConfig,
    assemble,
    build_coupling,
    build_environment,
    default_config,
    draw_couplings_map,
    random_regular_graph,
    rng_stream,
)
from penaltyguard.pauli import PAULI_MATRICES, QubitRegister, commutator, spectral_norm


def sigma_dot(v):
    return sum(c * PAULI_MATRICES[p] for c, p in zip(v, "XYZ"))


def op_on(n, site_ops):
    mats = [np.eye(2)] * n
    for q, m in site_ops.items():
        mats[q] = m
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def test_environment_coefficients_and_hermiticity():
    env = build_environment(8, seed=5)
    assert env.H_env.dim == 256 and env.H_env.hermitian
    for key in ("alpha_single", "alpha_edge"):
        vals = env.draws[key]
        assert np.all((vals >= COEFF_RANGE[0]) & (vals <= COEFF_RANGE[1]))
    deg = np.bincount(np.array(env.edges).ravel(), minlength=8)
    assert np.all(deg == 3)
    assert len({tuple(sorted(e)) for e in env.edges}) == len(env.edges) == 12
    assert all(b != c for b, c in env.edges)


def test_environment_zero_coefficients():
    env = build_environment(6, seed=1, coefficient_scale=0.0)
    assert env.H_env.nnz == 0


def test_environment_dense_oracle():
    env = build_environment(4, seed=9)
    d = env.draws
    H = np.zeros((16, 16), dtype=complex)
    for a in range(4):
        H += d["alpha_single"][a] * op_on(4, {a: sigma_dot(d["n_hat"][a])})
    for k, (b, c) in enumerate(env.edges):
        H += d["alpha_edge"][k] * op_on(4, {b: sigma_dot(d["m_hat"][k]), c: sigma_dot(d["l_hat"][k])})
    np.testing.assert_allclose(env.H_env.toarray(), H, atol=1e-13)


def test_environment_odd_rejected():
    with pytest.raises(ContractError):
        build_environment(5, seed=0)


def test_regular_graph_is_simple(rng):
    for n in (4, 6, 8, 12):
        edges = random_regular_graph(n, rng)
        deg = np.bincount(np.array(edges).ravel(), minlength=n)
        assert np.all(deg == 3)
        assert len(set(map(frozenset, edges))) == len(edges)


def test_coupling_dense_oracle_and_locality():
    reg = QubitRegister.build(4, 4)
    cmap = draw_couplings_map(reg, 2)
    assert len(set(cmap.values())) == 4
    c = build_coupling(reg, cmap, 2)
    d = c.draws
    env_index = {f"e{i}": 4 + i for i in range(4)}
    V = np.zeros((256, 256), dtype=complex)
    for w in range(4):
        V += d["beta"][w] * op_on(8, {w: sigma_dot(d["n_hat"][w])})
        V += d["gamma"][w] * op_on(8, {w: sigma_dot(d["m_hat"][w]),
                                       env_index[cmap[f"s{w}"]]: sigma_dot(d["l_hat"][w])})
    np.testing.assert_allclose(c.V.toarray(), V, atol=1e-13)
    for t in c.terms:
        assert t.weight(reg.system) == 1 and t.weight(reg.environment) <= 1


def test_coupling_non_injective_rejected():
    reg = QubitRegister.build(4, 4)
    with pytest.raises(ContractError, match="injective"):
        build_coupling(reg, {f"s{i}": "e0" for i in range(4)}, 0)


def test_gamma_zero_is_pure_system_error():
    reg = QubitRegister.build(4, 4)
    c = build_coupling(reg, draw_couplings_map(reg, 1), 1, gamma_scale=0.0)
    assert all(t.weight(reg.environment) == 0 for t in c.terms)


def test_default_instance_invariants():
    inst = assemble(default_config(seed=4))
    H = inst.H()
    assert H.dim == 4096
    resid = abs(H.matrix - H.matrix.conj().T)
    assert (resid.max() if resid.nnz else 0) < 1e-12
    P = inst.fam.total_P.matrix
    pvp = P @ inst.V.matrix @ P
    assert (abs(pvp).max() if pvp.nnz else 0) < 1e-12
    # H_env acts as identity on the system block
    henv = inst.H_env_full
    for Pi in inst.fam.per_logical_P:
        assert abs(henv @ Pi.matrix - Pi.matrix @ henv).max() < 1e-12
    for t in (0.0, 3.0):
        h0 = inst.H0(t).matrix
        for Pi in inst.fam.per_logical_P:
            assert abs(h0 @ Pi.matrix - Pi.matrix @ h0).max() < 1e-12


def test_norm_band_and_commutator_ratio_single_seed():
    inst = assemble(default_config(seed=0))
    v, h0 = spectral_norm(inst.V), spectral_norm(inst.H0())
    c = spectral_norm(commutator(inst.V, inst.H0()))
    assert 5 <= v <= 9
    assert c <= 2 * v * h0
    assert c / (v * h0) < 0.5


def test_determinism():
    a = assemble(default_config(seed=11, n_env=4))
    b = assemble(default_config(seed=11, n_env=4))
    assert (a.H().matrix != b.H().matrix).nnz == 0
    np.testing.assert_array_equal(a.initial_state(), b.initial_state())
    assert a.config_hash == b.config_hash


def test_changing_n_env_keeps_coupling_draws():
    a = assemble(default_config(seed=3, n_env=4))
    b = assemble(default_config(seed=3, n_env=8))
    for key in ("beta", "gamma", "n_hat"):
        np.testing.assert_array_equal(a.coupling.draws[key], b.coupling.draws[key])


def test_lambda_zero_decouples():
    inst = assemble(default_config(seed=1, n_env=4, lam=0.0, e_penalty=4.0))
    H = inst.H().toarray()
    H0 = inst.H0().toarray() + 4.0 * inst.fam.penalty_Q.toarray()
    np.testing.assert_allclose(H, H0, atol=1e-14)


def test_schedule_linear():
    cfg = default_config(n_env=2, h_comp={"kind": "linear_interpolation",
                                          "endpoints": [[[1.0, "X"]], [[1.0, "Z"]]], "total_time": 10.0})
    inst = assemble(cfg)
    code = inst.code
    np.testing.assert_allclose(inst.h_sys(2.5), 0.75 * code.logical_x + 0.25 * code.logical_z)
    assert not inst.time_independent


def test_config_roundtrip_and_strictness():
    cfg = default_config(seed=7, lam=0.02)
    d = cfg.to_dict()
    assert ModelConfig.from_dict(json.loads(json.dumps(d))) == cfg
    with pytest.raises(ConfigError, match="unknown"):
        ModelConfig.from_dict({**d, "extra": 1})
    missing = dict(d)
    del missing["seed"]
    with pytest.raises(ConfigError, match="missing"):
        ModelConfig.from_dict(missing)
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({**d, "n_env": 3})
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({**d, "initial_env_state": "zero"})


def test_initial_states():
    inst = assemble(default_config(n_env=2, initial_system_state={"kind": "plus_L", "coeffs": None}))
    plus = (inst.code.logical_zero + inst.code.logical_one) / np.sqrt(2)
    np.testing.assert_allclose(inst.system_state(), plus)
    inst = assemble(default_config(n_env=2, initial_system_state={
        "kind": "logical_coeffs", "coeffs": [[0.6, 0.0], [0.0, 0.8]]}))
    np.testing.assert_allclose(inst.logical_coefficients(), [0.6, 0.8j], atol=1e-15)
    with pytest.raises(ConfigError):
        default_config(initial_system_state={"kind": "logical_coeffs", "coeffs": [[1, 0], [1, 0]]})


def test_rng_streams_are_independent():
    a = rng_stream(0, "graph").random(3)
    b = rng_stream(0, "env_vectors").random(3)
    assert not np.allclose(a, b)
