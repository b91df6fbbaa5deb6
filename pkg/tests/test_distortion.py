import numpy as np
import pytest

from qsrd.channels import reduce_to
from qsrd.distortion import (EnsembleSource, ensemble_fidelity, ensemble_qsr_observable, ensemble_schumacher_observable,
                             evaluate, evaluate_percopy, functional_measure, observable_measure, qsr_observable,
                             schumacher_observable)
from qsrd.entropics import fidelity_matrices
from qsrd.k_solver import random_ensemble
from qsrd.tensor_core import (AddressingError, Operator, QuantumState, SystemLayout, random_mixed_state,
                              random_pure_state, tensor)

from conftest import bell_state, ghz_state


def _projector_measure(psi: QuantumState):
    d = psi.layout.total_dim
    return observable_measure(Operator(psi.layout, np.eye(d) - np.outer(psi.data, psi.data.conj())))


def test_evaluate_examples():
    psi = random_pure_state(SystemLayout.of(("A", 3)), 0)
    m = _projector_measure(psi)
    assert evaluate(m, psi) == pytest.approx(0, abs=1e-12)
    perp = np.linalg.svd(psi.data.reshape(1, -1))[2][1]
    assert evaluate(m, QuantumState(psi.layout, perp)) == pytest.approx(1, abs=1e-12)
    assert evaluate(m, QuantumState(psi.layout, np.eye(3) / 3)) == pytest.approx(1 - 1 / 3, abs=1e-12)


def test_evaluate_layout_mismatch():
    m = _projector_measure(random_pure_state(SystemLayout.of(("A", 2)), 0))
    with pytest.raises(AddressingError):
        evaluate(m, random_pure_state(SystemLayout.of(("B", 2)), 0))


def test_observable_evaluation_is_trace_formula():
    lay = SystemLayout.of(("A", 2), ("B", 2))
    rng = np.random.default_rng(0)
    g = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    m = observable_measure(Operator(lay, g + g.conj().T))
    rho = random_mixed_state(lay, 1)
    assert evaluate(m, rho) == pytest.approx(np.real(np.trace(rho.data @ (g + g.conj().T))), abs=1e-12)


def test_non_hermitian_observable_rejected():
    with pytest.raises(ValueError):
        observable_measure(Operator(SystemLayout.of(("A", 2)), np.array([[0, 1], [0, 0]])))


def test_percopy_examples():
    lay = SystemLayout.of(("A", 2))
    m = _projector_measure(random_pure_state(lay, 3))
    rho = random_mixed_state(lay, 4)
    r1 = rho.rename({"A": "A_1"})
    assert evaluate_percopy(m, r1, 1) == pytest.approx(evaluate(m, rho), abs=1e-12)
    both = tensor(r1, rho.rename({"A": "A_2"}))
    assert evaluate_percopy(m, both, 2) == pytest.approx(evaluate(m, rho), abs=1e-12)


def test_percopy_on_correlated_state():
    lay = SystemLayout.of(("A", 2))
    m = _projector_measure(random_pure_state(lay, 5))
    s = random_mixed_state(SystemLayout.of(("A_1", 2), ("A_2", 2)), 6)
    m1 = QuantumState(lay, s.reduced("A_1"))
    m2 = QuantumState(lay, s.reduced("A_2"))
    assert evaluate_percopy(m, s, 2) == pytest.approx((evaluate(m, m1) + evaluate(m, m2)) / 2, abs=1e-12)
    swapped = s.permuted(["A_2", "A_1"]).rename({"A_1": "A_2", "A_2": "A_1"})
    assert evaluate_percopy(m, swapped, 2) == pytest.approx(evaluate_percopy(m, s, 2), abs=1e-10)


def test_percopy_replica_mismatch():
    m = _projector_measure(random_pure_state(SystemLayout.of(("A", 2)), 0))
    with pytest.raises(AddressingError):
        evaluate_percopy(m, random_pure_state(SystemLayout.of(("A_1", 2)), 0), 2)


def test_schumacher_observable_on_identity_decoded_bell():
    m = schumacher_observable(bell_state())
    assert m.layout.names == ("Ahat", "R")
    assert evaluate(m, bell_state("Ahat")) == pytest.approx(0, abs=1e-12)
    assert evaluate(m, QuantumState(m.layout, np.eye(4) / 4)) == pytest.approx(0.75, abs=1e-12)


def test_qsr_observable_examples():
    g = ghz_state()
    m = qsr_observable(g)
    decoded = g.rename({"A": "Ahat", "B": "Bhat"})
    assert evaluate(m, decoded) == pytest.approx(0, abs=1e-12)
    flipped = QuantumState(m.layout, np.r_[0, 0, 0, 1, 1, 0, 0, 0] / np.sqrt(2))
    assert evaluate(m, flipped) == pytest.approx(1, abs=1e-12)
    assert evaluate(m, QuantumState(m.layout, np.eye(8) / 8)) == pytest.approx(1 - 1 / 8, abs=1e-12)


def _cq(ens: EnsembleSource, blocks) -> QuantumState:
    """sum_x p(x) blocks[x] (x) |x><x| on the hatted signal registers and X."""
    nx = ens.size
    d = blocks[0].shape[0]
    rho = np.zeros((d * nx, d * nx), dtype=complex)
    for x in range(nx):
        e = np.zeros((nx, nx))
        e[x, x] = 1
        rho += ens.probs[x] * np.kron(blocks[x], e)
    lay = SystemLayout(tuple(({"A": "Ahat", "B": "Bhat", "C": "Chat"}.get(n, n), dd) for n, dd in ens.layout))
    return QuantumState(lay + SystemLayout.of(("X", nx)), rho)


def test_ensemble_schumacher_examples():
    lay = SystemLayout.of(("A", 2))
    ens = EnsembleSource([0.5, 0.5], ([1, 0], [0, 1]), lay)
    m = ensemble_schumacher_observable(ens)
    perfect = _cq(ens, [np.diag([1, 0]), np.diag([0, 1])])
    assert evaluate(m, perfect) == pytest.approx(0, abs=1e-12)
    mixed = _cq(ens, [np.eye(2) / 2] * 2)
    assert evaluate(m, mixed) == pytest.approx(0.5, abs=1e-12)
    swapped = _cq(ens, [np.diag([0, 1]), np.diag([1, 0])])
    assert evaluate(m, swapped) == pytest.approx(1, abs=1e-12)


def test_single_element_ensemble_matches_qsr_observable():
    psi = random_pure_state(SystemLayout.of(("A", 2), ("B", 2), ("R", 2)), 2)
    ens = EnsembleSource([1.0], (psi.data,), psi.layout)
    m_ens, m_qsr = ensemble_qsr_observable(ens), qsr_observable(psi)
    np.testing.assert_allclose(m_ens.observable.matrix, m_qsr.observable.matrix, atol=1e-14)
    rho = random_mixed_state(m_qsr.layout, 3)
    cq = QuantumState(m_ens.layout, rho.data)
    assert evaluate(m_ens, cq) == pytest.approx(evaluate(m_qsr, rho), abs=1e-12)


def test_ensemble_observable_equals_branch_fidelity_sum():
    for seed in range(500):
        ens = random_ensemble(seed, 2, {"A": 2, "R": 2})
        blocks = [random_mixed_state(SystemLayout.of(("A", 4)), 1000 * seed + x).data for x in range(2)]
        cq = _cq(ens, blocks)
        m = ensemble_qsr_observable(ens)
        oracle = sum(ens.probs[x] * np.real(ens.states[x].conj() @ blocks[x] @ ens.states[x]) for x in range(2))
        assert 1 - evaluate(m, cq) == pytest.approx(oracle, abs=1e-12)
        assert ensemble_fidelity(ens, cq) == pytest.approx(1 - evaluate(m, cq), abs=1e-12)


def test_ensemble_fidelity_examples():
    ens = random_ensemble(7, 2, {"A": 2, "R": 2})
    exact = _cq(ens, [np.outer(s, s.conj()) for s in ens.states])
    assert ensemble_fidelity(ens, exact) == pytest.approx(1, abs=1e-12)
    single = EnsembleSource([1.0], (ens.states[0],), ens.layout)
    b = random_mixed_state(SystemLayout.of(("A", 4)), 8).data
    assert ensemble_fidelity(single, _cq(single, [b])) == pytest.approx(fidelity_matrices(ens.states[0], b) ** 2)


def test_ensemble_fidelity_dimension_mismatch():
    ens = random_ensemble(7, 2, {"A": 2, "R": 2})
    three = EnsembleSource([0.2, 0.3, 0.5], ens.states + (ens.states[0],), ens.layout)
    with pytest.raises(ValueError):
        ensemble_fidelity(three, _cq(ens, [np.eye(4) / 4] * 2))


def test_observable_measures_are_affine():
    m = ensemble_qsr_observable(random_ensemble(1, 2, {"A": 2, "R": 2}))
    for seed in range(20):
        a = random_mixed_state(m.layout, 2 * seed)
        b = random_mixed_state(m.layout, 2 * seed + 1)
        p = (seed + 1) / 22
        mix = QuantumState(m.layout, p * a.data + (1 - p) * b.data)
        assert evaluate(m, mix) == pytest.approx(p * evaluate(m, a) + (1 - p) * evaluate(m, b), abs=1e-12)


def test_constructed_observables_are_hermitian():
    ens = random_ensemble(2, 3, {"A": 2, "B": 2, "R": 2})
    for m in (ensemble_qsr_observable(ens), qsr_observable(ghz_state()), schumacher_observable(bell_state())):
        assert m.observable.is_hermitian(1e-10)


def test_functional_measure():
    lay = SystemLayout.of(("A", 2))
    m = functional_measure(lambda s: float(np.real(s.density_matrix()[1, 1])), lay, convex=True)
    rho = QuantumState(SystemLayout.of(("A", 2), ("R", 2)), np.eye(4) / 4)
    assert evaluate(m, rho) == pytest.approx(0.5)
    assert reduce_to(rho, ["A"]).layout == lay
