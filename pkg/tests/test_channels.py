import numpy as np
import pytest

from qsrd.channels import (ChannelMap, CodePair, IsometryMap, apply_channel, block_output, extract_single_copy_maps,
                           haar_isometry, hermitian_from_params, identity_isometry, isometry_from_params,
                           params_from_unitary, product_block_code, random_block_code, reduce_to, run_code, timeshare)
from qsrd.distortion import evaluate
from qsrd.entropics import cond_mutual_info, fidelity
from qsrd.rd_solver import objective, qsr_instance, schumacher_instance
from qsrd.tensor_core import QuantumState, SystemLayout, haar_sample, random_mixed_state, random_pure_state

from conftest import bell_state

A2 = SystemLayout.of(("A", 2))


def _identity_code(inst):
    enc = identity_isometry(SystemLayout.of(("A", 2)), SystemLayout.of(("Z", 2), ("W", 1)))
    dec = identity_isometry(SystemLayout.of(("Z", 2)), SystemLayout.of(("Ahat", 2), ("V", 1)))
    return CodePair(ChannelMap(enc, ("W",)), ChannelMap(dec, ("V",)))


def _rotated_code(theta: float):
    """Identity code followed by diag(e^{i theta}, e^{-i theta}) on Ahat: distortion sin^2(theta) on Bell."""
    enc = identity_isometry(SystemLayout.of(("A", 2)), SystemLayout.of(("Z", 2), ("W", 1)))
    u = np.diag([np.exp(1j * theta), np.exp(-1j * theta)])
    dec = IsometryMap(SystemLayout.of(("Z", 2)), SystemLayout.of(("Ahat", 2), ("V", 1)), u)
    return CodePair(ChannelMap(enc, ("W",)), ChannelMap(dec, ("V",)))


def _random_code(inst, seed):
    rng = np.random.default_rng(seed)
    s1, s2 = rng.integers(0, 2 ** 62, size=2)
    c = inst.caps
    enc = haar_isometry(SystemLayout.of(("A", 2)), SystemLayout.of(("Z", c["z"]), ("W", c["w"])), s1)
    dec = haar_isometry(SystemLayout.of(("Z", c["z"])), SystemLayout.of(("Ahat", 2), ("V", c["v"])), s2)
    return CodePair(ChannelMap(enc, ("W",)), ChannelMap(dec, ("V",)))


def test_zero_params_give_identity_columns():
    v = isometry_from_params(np.zeros(16), 2, 4)
    np.testing.assert_allclose(v.matrix, np.eye(4)[:, :2], atol=1e-14)


def test_params_always_give_isometries():
    rng = np.random.default_rng(0)
    for _ in range(20):
        v = isometry_from_params(rng.standard_normal(36) * 3, 2, 6).matrix
        assert np.abs(v.conj().T @ v - np.eye(2)).max() <= 1e-10


def test_param_map_is_second_order_accurate():
    rng = np.random.default_rng(1)
    g = rng.standard_normal(9)
    v0 = isometry_from_params(np.zeros(9), 2, 3).matrix
    h = 1e-6
    dv = (isometry_from_params(h * g, 2, 3).matrix - isometry_from_params(-h * g, 2, 3).matrix) / (2 * h)

    def err(eps):
        return np.linalg.norm(isometry_from_params(eps * g, 2, 3).matrix - v0 - eps * dv)

    for eps in (1e-2, 5e-3):
        assert err(eps) / err(eps / 2) == pytest.approx(4, rel=0.05)
    # the derivative is i H(g) restricted to the first columns
    np.testing.assert_allclose(dv, 1j * hermitian_from_params(g, 3)[:, :2], atol=1e-6)


def test_wrong_parameter_count():
    with pytest.raises(ValueError):
        isometry_from_params(np.zeros(5), 2, 3)


def test_haar_unitaries_are_reachable_via_logm():
    for seed in range(10):
        u = haar_sample(3, 3, seed)
        v = isometry_from_params(params_from_unitary(u), 3, 3).matrix
        np.testing.assert_allclose(v, u, atol=1e-8)


def test_identity_channel_leaves_state_unchanged():
    rho = random_mixed_state(SystemLayout.of(("A", 2), ("B", 3)), 2)
    c = ChannelMap(identity_isometry(A2, A2))
    out = apply_channel(c, rho, "A")
    np.testing.assert_allclose(out.data, rho.data, atol=1e-12)


def test_fully_depolarizing_channel_on_bell():
    # |a> -> (1/sqrt 2) sum_j |j>_A |j>_E1 |a>_E2, then discard E1 E2
    out_lay = SystemLayout.of(("A", 2), ("E1", 2), ("E2", 2))
    v = np.zeros((8, 2))
    for a in range(2):
        for j in range(2):
            v[j * 4 + j * 2 + a, a] = 2 ** -0.5
    c = ChannelMap(IsometryMap(A2, out_lay, v), ("E1", "E2"))
    out = apply_channel(c, bell_state(), "A")
    np.testing.assert_allclose(out.density_matrix(), np.eye(4) / 4, atol=1e-12)


def test_channel_matches_kraus_sum():
    out_lay = SystemLayout.of(("A", 3), ("E", 2))
    c = ChannelMap(haar_isometry(A2, out_lay, 5), ("E",))
    rho = random_mixed_state(SystemLayout.of(("A", 2), ("B", 2)), 6)
    out = apply_channel(c, rho, "A")
    v = c.isometry.matrix.reshape(3, 2, 2)  # (A_out, E, A_in)
    expect = np.zeros((6, 6), dtype=complex)
    for e in range(2):
        k = np.kron(v[:, e, :], np.eye(2))
        expect += k @ rho.data @ k.conj().T
    np.testing.assert_allclose(out.data, expect, atol=1e-12)
    assert np.linalg.eigvalsh(out.data).min() > -1e-12
    assert abs(np.trace(out.data) - 1) < 1e-9


def test_channel_is_completely_positive_on_maximally_entangled_input():
    c = ChannelMap(haar_isometry(SystemLayout.of(("A", 3)), SystemLayout.of(("A", 2), ("E", 3)), 7), ("E",))
    phi = QuantumState(SystemLayout.of(("A", 3), ("B", 3)), np.eye(3).reshape(-1) / np.sqrt(3))
    choi = apply_channel(c, phi, "A").density_matrix()
    assert np.linalg.eigvalsh(choi).min() > -1e-12


def test_identity_code_reproduces_the_source():
    inst = schumacher_instance(bell_state(), z_cap=2)
    phi, xi = run_code(_identity_code(inst), inst.source)
    src = inst.source.rename({"A": "Ahat"})
    assert fidelity(reduce_to(xi, ["Ahat", "R"]).as_mixed(), src.as_mixed()) == pytest.approx(1, abs=1e-9)


def test_trash_encoder_sends_no_information():
    inst = qsr_instance(random_pure_state(SystemLayout.of(("A", 2), ("B", 2), ("R", 2)), 3), z_cap=1)
    c = inst.caps
    enc = haar_isometry(SystemLayout.of(("A", 2)), SystemLayout.of(("Z", 1), ("W", c["w"])), 1)
    dec = haar_isometry(SystemLayout.of(("Z", 1), ("B", 2)), SystemLayout.of(("Ahat", 2), ("Bhat", 2), ("V", c["v"])), 2)
    phi, _ = run_code(CodePair(ChannelMap(enc, ("W",)), ChannelMap(dec, ("V",))), inst.source)
    assert abs(cond_mutual_info(phi, "Z", "R", "B")) < 1e-10


def test_run_code_matches_monolithic_isometry():
    inst = schumacher_instance(bell_state(), z_cap=2)
    for seed in range(5):
        code = _random_code(inst, seed)
        _, dist = objective(code, inst)
        c = inst.caps
        ve, vd = code.encoder.isometry.matrix, code.decoder.isometry.matrix
        big = np.kron(vd, np.eye(c["w"])) @ ve  # A -> (Ahat, V, W)
        m = (big @ inst.source.data.reshape(2, 2)).reshape(2, c["v"] * c["w"], 2)
        rho = np.einsum("aer,bes->arbs", m, m.conj()).reshape(4, 4)
        psi = inst.source.data
        assert dist == pytest.approx(1 - np.real(psi.conj() @ rho @ psi), abs=1e-10)


def test_rotated_code_has_the_designed_distortion():
    inst = schumacher_instance(bell_state(), z_cap=2)
    for d in (0.1, 0.3):
        code = _rotated_code(np.arcsin(np.sqrt(d)))
        assert objective(code, inst)[1] == pytest.approx(d, abs=1e-12)


def test_timeshare_weight_one_is_code1():
    inst = schumacher_instance(bell_state(), z_cap=2)
    c1, c2 = _random_code(inst, 1), _random_code(inst, 2)
    xi1 = run_code(c1, inst.source)[1]
    xi = run_code(timeshare(c1, c2, 1.0), inst.source)[1]
    np.testing.assert_allclose(reduce_to(xi, ["Ahat", "R"]).density_matrix(),
                               reduce_to(xi1, ["Ahat", "R"]).density_matrix(), atol=1e-12)


def test_timeshare_mixes_distortions():
    inst = schumacher_instance(bell_state(), z_cap=2)
    c1, c2 = _rotated_code(np.arcsin(np.sqrt(0.1))), _rotated_code(np.arcsin(np.sqrt(0.3)))
    _, dist = objective(timeshare(c1, c2, 0.5), inst, enforce_caps=False)
    assert dist == pytest.approx(0.2, abs=1e-10)


def test_timeshare_decomposes_the_rate():
    inst = schumacher_instance(bell_state(), z_cap=2)
    for seed in range(5):
        c1, c2 = _random_code(inst, 2 * seed), _random_code(inst, 2 * seed + 1)
        p = 0.2 + 0.15 * seed
        r1, d1 = objective(c1, inst)
        r2, d2 = objective(c2, inst)
        xi = run_code(timeshare(c1, c2, p), inst.source)[1]
        xi1, xi2 = run_code(c1, inst.source)[1], run_code(c2, inst.source)[1]
        keep = ["Ahat", "R"]
        np.testing.assert_allclose(reduce_to(xi, keep).density_matrix(),
                                   p * reduce_to(xi1, keep).density_matrix()
                                   + (1 - p) * reduce_to(xi2, keep).density_matrix(), atol=1e-10)
        r, d = objective(timeshare(c1, c2, p), inst, enforce_caps=False)
        assert d == pytest.approx(p * d1 + (1 - p) * d2, abs=1e-10)
        assert r == pytest.approx(p * r1 + (1 - p) * r2, abs=1e-9)


def test_timeshare_rejects_bad_weight():
    inst = schumacher_instance(bell_state(), z_cap=2)
    c = _random_code(inst, 0)
    with pytest.raises(ValueError):
        timeshare(c, c, 1.5)


def _copy_marginal(block, source, i):
    _, xi = block_output(block, source)
    names = [f"{a}_{i}" for a in block.alice_out] + [f"{b}_{i}" for b in block.bob_out] + [f"R_{i}"]
    return reduce_to(xi, names).density_matrix()


def _extracted_output(block, source, i):
    pair = extract_single_copy_maps(block, i, source)
    _, zeta = run_code(pair, source)
    return reduce_to(zeta, list(block.alice_out) + list(block.bob_out) + ["R"]).density_matrix()


def test_extraction_at_n1_reproduces_the_block_code():
    psi = random_pure_state(SystemLayout.of(("A", 2), ("B", 2), ("R", 2)), 0)
    block = random_block_code(psi, 1, 3)
    np.testing.assert_allclose(_extracted_output(block, psi, 1), _copy_marginal(block, psi, 1), atol=1e-9)


def test_extraction_of_product_code_gives_single_copy_output():
    inst = schumacher_instance(bell_state(), z_cap=2)
    code = _random_code(inst, 4)
    block = product_block_code(code, 2, inst.source, bob_regs=())
    single = reduce_to(run_code(code, inst.source)[1], ["Ahat", "R"]).density_matrix()
    for i in (1, 2):
        np.testing.assert_allclose(_extracted_output(block, inst.source, i), single, atol=1e-9)
        np.testing.assert_allclose(_copy_marginal(block, inst.source, i), single, atol=1e-9)


def test_extraction_of_correlated_code_matches_marginals():
    psi = random_pure_state(SystemLayout.of(("A", 2), ("B", 2), ("R", 2)), 1)
    for seed in range(3):
        block = random_block_code(psi, 2, seed)
        for i in (1, 2):
            np.testing.assert_allclose(_extracted_output(block, psi, i), _copy_marginal(block, psi, i), atol=1e-9)


def test_extraction_index_out_of_range():
    psi = random_pure_state(SystemLayout.of(("A", 2), ("B", 2), ("R", 2)), 1)
    with pytest.raises(ValueError):
        extract_single_copy_maps(random_block_code(psi, 2, 0), 3, psi)


def test_distortion_from_run_code_is_evaluated_on_xi():
    inst = schumacher_instance(bell_state(), z_cap=2)
    code = _random_code(inst, 9)
    _, xi = run_code(code, inst.source)
    assert objective(code, inst)[1] == pytest.approx(evaluate(inst.measure, xi), abs=1e-14)
