import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsrd.entropics import (afw_bound, binary_entropy, cond_entropy, cond_mutual_info, evaluate_expression,
                            fannes_audenaert_bound, fidelity, fvdg_band, g_func, mutual_info, trace_distance,
                            trace_distance_matrices, von_neumann_entropy)
from qsrd.tensor_core import AddressingError, QuantumState, SystemLayout, random_mixed_state, random_pure_state, tensor

from conftest import bell_state, ghz_state, qubit


def test_entropy_examples():
    lay = SystemLayout.of(("A", 2))
    assert von_neumann_entropy(QuantumState(lay, np.eye(2) / 2)) == pytest.approx(1.0, abs=1e-12)
    assert von_neumann_entropy(random_pure_state(SystemLayout.of(("A", 2), ("B", 3)), 0)) == pytest.approx(0, abs=1e-9)
    assert von_neumann_entropy(QuantumState(lay, np.diag([0.75, 0.25]))) == pytest.approx(0.811278, abs=1e-6)


def test_entropy_unknown_register():
    with pytest.raises(AddressingError):
        von_neumann_entropy(bell_state(), "Q")


def test_product_state_has_no_mutual_information():
    a = random_mixed_state(SystemLayout.of(("A", 2)), 1)
    b = random_mixed_state(SystemLayout.of(("B", 3)), 2)
    assert abs(mutual_info(tensor(a, b), "A", "B")) < 1e-10


def test_ghz_conditional_mutual_information():
    g = ghz_state()
    # oracle: the four entropies of the expansion, read off by hand
    assert von_neumann_entropy(g, ["A", "B"]) == pytest.approx(1)
    assert von_neumann_entropy(g, ["B", "R"]) == pytest.approx(1)
    assert von_neumann_entropy(g, ["B"]) == pytest.approx(1)
    assert cond_mutual_info(g, "A", "R", "B") == pytest.approx(1.0, abs=1e-10)


def test_bell_mutual_information():
    assert mutual_info(bell_state(), "A", "R") == pytest.approx(2.0, abs=1e-10)
    assert cond_entropy(bell_state(), "A", "R") == pytest.approx(-1.0, abs=1e-10)


def test_overlapping_register_sets_rejected():
    with pytest.raises(AddressingError):
        mutual_info(bell_state(), ["A", "R"], "R")


def test_fidelity_examples():
    rho = random_mixed_state(SystemLayout.of(("A", 2)), 3)
    assert fidelity(rho, rho) == pytest.approx(1.0, abs=1e-7)
    assert fidelity(qubit([1, 0]), qubit([0, 1])) == pytest.approx(0.0, abs=1e-12)
    assert fidelity(qubit([1, 0]), qubit([1, 1])) == pytest.approx(0.70711, abs=1e-5)


def test_fidelity_layout_mismatch():
    with pytest.raises(AddressingError):
        fidelity(qubit([1, 0], "A"), qubit([1, 0], "B"))


def test_trace_distance_examples():
    lay = SystemLayout.of(("A", 2))
    rho = random_mixed_state(lay, 4)
    assert trace_distance(rho, rho) == pytest.approx(0, abs=1e-12)
    assert trace_distance(qubit([1, 0]), qubit([0, 1])) == pytest.approx(1, abs=1e-12)
    assert trace_distance(QuantumState(lay, np.diag([0.75, 0.25])), QuantumState(lay, np.eye(2) / 2)) == \
        pytest.approx(0.25, abs=1e-12)


def test_fvdg_band_examples():
    rho = qubit([1, 2])
    lo, hi = fvdg_band(rho, rho)
    assert lo == pytest.approx(0, abs=1e-12) and hi == pytest.approx(0, abs=1e-6)
    assert fvdg_band(qubit([1, 0]), qubit([0, 1])) == pytest.approx((1, 1))


def test_fvdg_band_contains_trace_distance():
    lay = SystemLayout.of(("A", 2), ("B", 2))
    for seed in range(1000):
        a = random_mixed_state(lay, 2 * seed, rank=1 + seed % 4)
        b = random_mixed_state(lay, 2 * seed + 1, rank=1 + (seed // 4) % 4)
        lo, hi = fvdg_band(a, b)
        t = trace_distance(a, b)
        assert lo - 1e-9 <= t <= hi + 1e-9


def test_g_and_afw_examples():
    assert g_func(0) == 0
    assert afw_bound(0, 3) == 0
    # g(0.1) = 1.1 log2(1.1) + 0.1 log2(10); afw adds 2 * 0.1 * log2(2)
    oracle = 1.1 * np.log2(1.1) + 0.1 * np.log2(10)
    assert g_func(0.1) == pytest.approx(oracle, abs=1e-12)
    assert g_func(0.1) == pytest.approx(0.48345, abs=1e-5)
    assert afw_bound(0.1, 2) == pytest.approx(0.68345, abs=1e-5)
    with pytest.raises(ValueError):
        g_func(-0.1)
    with pytest.raises(ValueError):
        afw_bound(-0.1, 2)


def _cond_entropy_gap(rho: np.ndarray, sigma: np.ndarray) -> float:
    lay = SystemLayout.of(("U", 2), ("V", 2))
    a, b = QuantumState(lay, rho), QuantumState(lay, sigma)
    return abs(cond_entropy(a, "U", "V") - cond_entropy(b, "U", "V"))


def test_afw_bound_dominates():
    lay = SystemLayout.of(("U", 2), ("V", 2))
    for seed in range(500):
        a = random_mixed_state(lay, 3 * seed)
        b = random_mixed_state(lay, 3 * seed + 1)
        mix = 0.05 + 0.9 * (seed % 10) / 10
        sigma = (1 - mix) * a.data + mix * b.data
        delta = trace_distance_matrices(a.data, sigma)
        assert _cond_entropy_gap(a.data, sigma) <= afw_bound(delta, 2) + 1e-9


def test_fannes_audenaert_examples():
    assert fannes_audenaert_bound(0, 2) == 0
    assert fannes_audenaert_bound(0.1, 2) == pytest.approx(0.46900, abs=1e-5)
    assert fannes_audenaert_bound(0.1, 2) == pytest.approx(binary_entropy(0.1), abs=1e-12)
    assert fannes_audenaert_bound(0.9, 2) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        fannes_audenaert_bound(1.5, 2)


def test_fannes_audenaert_dominates():
    lay = SystemLayout.of(("A", 2))
    for seed in range(500):
        a = random_mixed_state(lay, 2 * seed)
        b = random_mixed_state(lay, 2 * seed + 1)
        d = trace_distance(a, b)
        gap = abs(von_neumann_entropy(a) - von_neumann_entropy(b))
        assert gap <= fannes_audenaert_bound(min(d, 1.0), 2) + 1e-9


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), da=st.integers(1, 3), db=st.integers(1, 3), dc=st.integers(1, 3),
       rank=st.integers(1, 4))
def test_strong_subadditivity(seed, da, db, dc, rank):
    rho = random_mixed_state(SystemLayout.of(("A", da), ("B", db), ("C", dc)), seed, rank=rank)
    assert cond_mutual_info(rho, "A", "C", "B") >= -1e-9


def test_expression_evaluation():
    rep = evaluate_expression(ghz_state(), "I(A:R|B)", "ghz")
    assert rep.value == pytest.approx(1.0, abs=1e-10)
    assert evaluate_expression(bell_state(), "S(A)").value == pytest.approx(1.0)
