"""Distortion measures: observable-backed (affine) and generic convex functionals."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .channels import reduce_to
from .entropics import fidelity_matrices
from .tensor_core import AddressingError, Operator, QuantumState, SystemLayout, StateError

# source register -> decoded register for the named measures
HAT = {"A": "Ahat", "B": "Bhat", "C": "Chat"}


@dataclass(frozen=True, eq=False)
class DistortionMeasure:
    """Either ``Tr(rho Delta)`` for a Hermitian observable, or a caller-supplied functional.

    ``register_map`` records which source register each decoded register stands
    for (e.g. ``{"A": "Ahat"}``).  ``convex`` is the caller's certificate for
    functionals; observable measures are affine and always convex.
    """

    kind: str
    observable: Operator | None = None
    functional: Callable[[QuantumState], float] | None = None
    layout: SystemLayout | None = None
    convex: bool = True
    register_map: Mapping[str, str] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        if self.kind == "observable":
            if self.observable is None:
                raise ValueError("observable measure needs an operator")
            if not self.observable.is_hermitian(1e-10):
                raise ValueError("distortion observable is not Hermitian")
            object.__setattr__(self, "layout", self.observable.layout)
        elif self.kind == "functional":
            if self.functional is None or self.layout is None:
                raise ValueError("functional measure needs an evaluator and a layout")
        else:
            raise ValueError(f"unknown distortion kind {self.kind!r}")
        object.__setattr__(self, "register_map", dict(self.register_map))

    @property
    def is_observable(self) -> bool:
        return self.kind == "observable"

    def eigenvalue_range(self) -> tuple[float, float]:
        if not self.is_observable:
            raise ValueError("eigenvalue range is only defined for observable measures")
        w = np.linalg.eigvalsh(self.observable.matrix)
        return float(w[0]), float(w[-1])


def observable_measure(op: Operator, register_map: Mapping[str, str] | None = None, name: str = "observable") -> DistortionMeasure:
    return DistortionMeasure("observable", observable=op, register_map=register_map or {}, name=name)


def functional_measure(fn: Callable[[QuantumState], float], layout: SystemLayout, convex: bool,
                       name: str = "functional") -> DistortionMeasure:
    return DistortionMeasure("functional", functional=fn, layout=layout, convex=convex, name=name)


def _aligned(m: DistortionMeasure, s: QuantumState) -> QuantumState:
    """``s`` reduced to the measure's registers, in the measure's order."""
    names = m.layout.names
    for n, d in m.layout:
        if n not in s.layout:
            raise AddressingError(f"state lacks register {n!r} required by the distortion measure")
        if s.layout.dim(n) != d:
            raise AddressingError(f"register {n!r} has dim {s.layout.dim(n)}, measure expects {d}")
    return reduce_to(s, names)


def evaluate(m: DistortionMeasure, s: QuantumState) -> float:
    """Delta(s).  Extra registers of ``s`` are traced out first."""
    t = _aligned(m, s)
    if m.is_observable:
        op = m.observable.matrix
        if t.is_pure:
            return float(np.real(np.vdot(t.data, op @ t.data)))
        return float(np.real(np.einsum("ij,ji->", t.data, op)))
    return float(m.functional(t))


def evaluate_percopy(m: DistortionMeasure, s_n: QuantumState, n: int) -> float:
    """(1/n) sum_i Delta(marginal i), where copy i carries registers ``name_i``."""
    if n < 1:
        raise ValueError("n must be positive")
    total = 0.0
    for i in range(1, n + 1):
        names = [f"{r}_{i}" for r in m.layout.names]
        for r in names:
            if r not in s_n.layout:
                raise AddressingError(f"copy {i} is missing register {r!r}")
        marg = reduce_to(s_n, names).rename({f"{r}_{i}": r for r in m.layout.names})
        total += evaluate(m, marg)
    return total / n


def _hat_layout(layout: SystemLayout) -> SystemLayout:
    return layout.rename({n: HAT[n] for n in layout.names if n in HAT})


def pure_fidelity_observable(psi: QuantumState, name: str) -> DistortionMeasure:
    """1 - |psi><psi| on the hatted copy of psi's registers."""
    if not psi.is_pure:
        raise StateError("the source of a fidelity observable must be pure")
    lay = _hat_layout(psi.layout)
    d = lay.total_dim
    op = Operator(lay, np.eye(d) - np.outer(psi.data, psi.data.conj()))
    rmap = {n: HAT[n] for n in psi.layout.names if n in HAT}
    return observable_measure(op, rmap, name)


def schumacher_observable(psi: QuantumState) -> DistortionMeasure:
    """Delta = 1 - psi on Ahat R."""
    if set(psi.layout.names) - {"A", "R"}:
        raise AddressingError(f"Schumacher source must live on A, R; got {psi.layout.names}")
    return pure_fidelity_observable(psi, "schumacher")


def qsr_observable(psi: QuantumState) -> DistortionMeasure:
    """Delta = 1 - psi on Ahat Chat Bhat R."""
    return pure_fidelity_observable(psi, "qsr")


@dataclass(frozen=True, eq=False)
class EnsembleSource:
    """Pure signals |psi_x> on ``layout`` (registers among A, C, B, R) with probabilities p(x).

    ``R`` here is the per-signal reference R'.  The classical label lives on X.
    """

    probs: np.ndarray
    states: tuple[np.ndarray, ...]
    layout: SystemLayout

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 1 or p.size != len(self.states):
            raise ValueError("need one probability per signal state")
        if (p < 0).any() or abs(p.sum() - 1) > 1e-12:
            raise ValueError(f"probabilities must be non-negative and sum to 1, got sum {p.sum():.15g}")
        st = []
        for k, v in enumerate(self.states):
            v = np.array(v, dtype=complex).reshape(-1)
            if v.size != self.layout.total_dim:
                raise ValueError(f"signal {k} has {v.size} amplitudes, layout needs {self.layout.total_dim}")
            if abs(np.linalg.norm(v) - 1) > 1e-10:
                raise StateError(f"signal {k} is not normalized (norm {np.linalg.norm(v):.12g})")
            v.setflags(write=False)
            st.append(v)
        extra = set(self.layout.names) - {"A", "B", "C", "R"}
        if extra:
            raise AddressingError(f"ensemble signals may only use registers A, B, C, R; got {sorted(extra)}")
        if "A" not in self.layout:
            raise AddressingError("ensemble signals need register A")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "states", tuple(st))

    @property
    def size(self) -> int:
        return len(self.states)

    def dim(self, name: str) -> int:
        return self.layout.dim(name) if name in self.layout else 1

    def signal(self, x: int) -> QuantumState:
        return QuantumState(self.layout, self.states[x], validate=False)

    def purified(self) -> QuantumState:
        """sum_x sqrt(p(x)) |psi_x> |x>_X."""
        nx = self.size
        amp = sum(np.sqrt(self.probs[x]) * np.kron(self.states[x], np.eye(nx)[x]) for x in range(nx))
        return QuantumState(self.layout + SystemLayout.of(("X", nx)), amp, validate=False)

    def purified_pair(self) -> QuantumState:
        """sum_x sqrt(p(x)) |psi_x> |x>_X |x>_X'."""
        nx = self.size
        amp = sum(np.sqrt(self.probs[x]) * np.kron(self.states[x], np.kron(np.eye(nx)[x], np.eye(nx)[x]))
                  for x in range(nx))
        return QuantumState(self.layout + SystemLayout.of(("X", nx), ("Xp", nx)), amp, validate=False)

    def cq_state(self) -> QuantumState:
        """omega = sum_x p(x) psi_x (x) |x><x|_X."""
        nx = self.size
        d = self.layout.total_dim
        rho = np.zeros((d * nx, d * nx), dtype=complex)
        for x in range(nx):
            e = np.zeros((nx, nx))
            e[x, x] = 1
            rho += self.probs[x] * np.kron(np.outer(self.states[x], self.states[x].conj()), e)
        return QuantumState(self.layout + SystemLayout.of(("X", nx)), rho, validate=False)


def ensemble_qsr_observable(ens: EnsembleSource) -> DistortionMeasure:
    """Delta = sum_x (1 - psi_x) (x) |x><x|_X on Ahat Chat Bhat R X."""
    sig = _hat_layout(ens.layout)
    nx = ens.size
    d = sig.total_dim
    op = np.zeros((d * nx, d * nx), dtype=complex)
    for x in range(nx):
        e = np.zeros((nx, nx))
        e[x, x] = 1
        op += np.kron(np.eye(d) - np.outer(ens.states[x], ens.states[x].conj()), e)
    rmap = {n: HAT[n] for n in ens.layout.names if n in HAT}
    return observable_measure(Operator(sig + SystemLayout.of(("X", nx)), op), rmap, "ensemble_qsr")


def ensemble_schumacher_observable(ens: EnsembleSource) -> DistortionMeasure:
    """Delta = 1 - sum_x psi_x (x) |x><x| on Ahat X (signals on A alone)."""
    if ens.layout.names != ("A",):
        raise AddressingError("ensemble Schumacher signals must live on A alone")
    m = ensemble_qsr_observable(ens)
    return DistortionMeasure("observable", observable=m.observable, register_map=m.register_map,
                             name="ensemble_schumacher")


def branch_blocks(decoded: QuantumState, signal_names: Sequence[str], nx: int) -> list[np.ndarray]:
    """Unnormalized diagonal blocks <x|xi|x>_X on the signal registers."""
    if "X" not in decoded.layout:
        raise AddressingError("decoded state has no X register")
    if decoded.layout.dim("X") != nx:
        raise ValueError(f"X has dim {decoded.layout.dim('X')}, ensemble has {nx} signals")
    t = reduce_to(decoded, list(signal_names) + ["X"]).density_matrix()
    d = t.shape[0] // nx
    t = t.reshape(d, nx, d, nx)
    return [t[:, x, :, x] for x in range(nx)]


def ensemble_fidelity(ens: EnsembleSource, decoded: QuantumState) -> float:
    """sum_x p(x) F^2(psi_x, decoded branch x); decoded signals live on the hatted registers."""
    names = _hat_layout(ens.layout).names
    total = 0.0
    for x, b in enumerate(branch_blocks(decoded, names, ens.size)):
        px = np.real(np.trace(b))
        if px <= 0:
            continue
        total += ens.probs[x] * fidelity_matrices(ens.states[x], b / px) ** 2
    return float(total)
