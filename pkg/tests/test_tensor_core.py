import numpy as np
import pytest

from qsrd.tensor_core import (AddressingError, Operator, QuantumState, StateError, SystemLayout, haar_sample,
                              partial_trace, purify, random_mixed_state, random_pure_state, tensor)

from conftest import bell_state


def test_tensor_of_basis_states():
    zero = QuantumState.basis(SystemLayout.of(("A", 2)), 0)
    one = QuantumState.basis(SystemLayout.of(("B", 2)), 1)
    s = tensor(zero, one)
    assert s.layout.names == ("A", "B")
    np.testing.assert_allclose(s.data, [0, 1, 0, 0])
    assert int(np.argmax(np.abs(s.data))) == 1


def test_tensor_with_maximally_mixed_keeps_trace():
    rho = random_mixed_state(SystemLayout.of(("A", 2)), 3)
    mm = QuantumState(SystemLayout.of(("B", 2)), np.eye(2) / 2)
    assert abs(np.trace(tensor(rho, mm).data) - 1) < 1e-12


def test_tensor_entries_match_index_formula():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    b = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    t = tensor(Operator(SystemLayout.of(("A", 2)), a), Operator(SystemLayout.of(("B", 3)), b)).matrix
    for i in range(2):
        for j in range(2):
            for k in range(3):
                for m in range(3):
                    assert t[i * 3 + k, j * 3 + m] == pytest.approx(a[i, j] * b[k, m], abs=1e-14)


def test_tensor_rejects_name_collision():
    s = QuantumState.basis(SystemLayout.of(("A", 2)), 0)
    with pytest.raises(AddressingError):
        tensor(s, s)


def test_partial_trace_of_bell():
    np.testing.assert_allclose(partial_trace(bell_state(), "A").data, np.eye(2) / 2, atol=1e-14)


def test_partial_trace_keep_all_is_identity():
    s = random_pure_state(SystemLayout.of(("A", 2), ("B", 3)), 1)
    assert partial_trace(s, ["A", "B"]) is s


def test_partial_trace_unknown_register():
    with pytest.raises(AddressingError):
        partial_trace(bell_state(), "Q")


def test_partial_trace_matches_schmidt_coefficients():
    s = random_pure_state(SystemLayout.of(("A", 3), ("B", 2), ("C", 2)), 5)
    sv = np.linalg.svd(s.data.reshape(3, 4), compute_uv=False)
    eig = np.sort(np.linalg.eigvalsh(partial_trace(s, "A").data))[::-1]
    np.testing.assert_allclose(eig, sv ** 2, atol=1e-12)


def test_partial_trace_preserves_trace_on_many_states():
    lay = SystemLayout.of(("A", 2), ("B", 3), ("C", 2))
    for seed in range(1000):
        rho = random_mixed_state(lay, seed, rank=2)
        assert abs(np.trace(partial_trace(rho, ["A", "C"]).data) - 1) < 1e-10


def test_partial_trace_commutes_with_disjoint_traces():
    lay = SystemLayout.of(("A", 2), ("B", 2), ("C", 3))
    rho = random_mixed_state(lay, 11)
    one = partial_trace(partial_trace(rho, ["A", "C"]), ["A"])
    both = partial_trace(rho, ["A"])
    np.testing.assert_allclose(one.data, both.data, atol=1e-12)


def test_purify_pure_input_appends_zero_reference():
    s = random_pure_state(SystemLayout.of(("A", 2)), 2)
    p = purify(s, "R")
    np.testing.assert_allclose(p.data, np.kron(s.data, [1, 0]), atol=1e-14)


def test_purify_maximally_mixed_qubit():
    mm = QuantumState(SystemLayout.of(("A", 2)), np.eye(2) / 2)
    p = purify(mm, "R")
    assert p.is_pure
    np.testing.assert_allclose(p.reduced("A"), np.eye(2) / 2, atol=1e-12)
    np.testing.assert_allclose(np.linalg.svd(p.data.reshape(2, 2), compute_uv=False), [2 ** -0.5] * 2, atol=1e-12)


def test_purify_round_trip():
    rho = QuantumState(SystemLayout.of(("A", 2)), np.diag([0.75, 0.25]))
    np.testing.assert_allclose(purify(rho, "R").reduced("A"), rho.data, atol=1e-12)
    lay = SystemLayout.of(("A", 2), ("B", 2))
    for seed in range(50):
        rho = random_mixed_state(lay, seed)
        np.testing.assert_allclose(partial_trace(purify(rho, "R"), ["A", "B"]).data, rho.data, atol=1e-9)


def test_purify_rejects_used_name():
    with pytest.raises(AddressingError):
        purify(bell_state(), "R")


def test_haar_one_by_one_is_a_phase():
    assert abs(abs(haar_sample(1, 1, 4)[0, 0]) - 1) < 1e-12


def test_haar_is_deterministic_per_seed():
    assert np.array_equal(haar_sample(2, 5, 17), haar_sample(2, 5, 17))


def test_haar_is_an_isometry():
    v = haar_sample(3, 7, 0)
    np.testing.assert_allclose(v.conj().T @ v, np.eye(3), atol=1e-10)


def test_haar_first_entry_statistics():
    vals = [abs(haar_sample(1, 2, s)[0, 0]) ** 2 for s in range(10_000)]
    assert abs(np.mean(vals) - 0.5) < 0.02


def test_haar_rejects_short_output():
    with pytest.raises(ValueError):
        haar_sample(3, 2, 0)


def test_tensor_is_associative_up_to_reordering():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        a, b, c = (random_mixed_state(SystemLayout.of((n, d)), rng.integers(1 << 30))
                   for n, d in (("A", 2), ("B", 3), ("C", 2)))
        left = tensor(tensor(a, b), c)
        right = tensor(a, tensor(b, c))
        np.testing.assert_allclose(left.data, right.data, atol=1e-14)
        swapped = tensor(c, tensor(a, b)).permuted(["A", "B", "C"])
        np.testing.assert_allclose(swapped.data, left.data, atol=1e-14)


def test_state_validation():
    lay = SystemLayout.of(("A", 2))
    with pytest.raises(StateError):
        QuantumState(lay, np.array([1.0, 1.0]))
    with pytest.raises(StateError):
        QuantumState(lay, np.diag([1.2, -0.2]))


def test_layout_rejects_duplicates():
    with pytest.raises(AddressingError):
        SystemLayout.of(("A", 2), ("A", 3))
