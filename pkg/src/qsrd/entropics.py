"""Entropies, distances and continuity bounds.  All logarithms are base 2."""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .tensor_core import AddressingError, QuantumState, Registers, StateError, names_of

LOG2E = 1.0 / np.log(2.0)
EIG_CLAMP = 1e-12
TRACE_DRIFT = 1e-9
FACTOR_FLOOR = 1e-14


def entropy_of_spectrum(w) -> float:
    """Shannon entropy in bits of a (clamped) eigenvalue list."""
    w = np.asarray(w, dtype=float)
    if w.size and w.min() < -1e-10:
        raise StateError(f"eigenvalue {w.min():.3e} below PSD tolerance")
    if abs(w.sum() - 1.0) > TRACE_DRIFT:
        raise StateError(f"spectrum sums to {w.sum():.12g}; trace drift above {TRACE_DRIFT}")
    w = w[w > EIG_CLAMP]
    return float(-np.sum(w * np.log(w)) * LOG2E)


def entropy_of_matrix(rho: np.ndarray) -> float:
    return entropy_of_spectrum(np.linalg.eigvalsh((rho + rho.conj().T) / 2))


def binary_entropy(p: float) -> float:
    if p <= 0 or p >= 1:
        return 0.0
    return float(-(p * np.log(p) + (1 - p) * np.log(1 - p)) * LOG2E)


def von_neumann_entropy(s: QuantumState, regs: Registers | None = None) -> float:
    names = s.layout.names if regs is None else names_of(regs)
    if not names:
        return 0.0
    return entropy_of_spectrum(s.spectrum(names))


def _check_disjoint(*groups: tuple[str, ...]):
    seen: set[str] = set()
    for g in groups:
        if seen & set(g):
            raise AddressingError(f"register sets overlap on {sorted(seen & set(g))}")
        seen |= set(g)


def cond_entropy(s: QuantumState, regs_a: Registers, regs_b: Registers) -> float:
    """S(A|B) = S(AB) - S(B)."""
    a, b = names_of(regs_a), names_of(regs_b)
    _check_disjoint(a, b)
    return von_neumann_entropy(s, a + b) - von_neumann_entropy(s, b)


def mutual_info(s: QuantumState, regs_a: Registers, regs_b: Registers) -> float:
    """I(A:B) = S(A) + S(B) - S(AB)."""
    a, b = names_of(regs_a), names_of(regs_b)
    _check_disjoint(a, b)
    return von_neumann_entropy(s, a) + von_neumann_entropy(s, b) - von_neumann_entropy(s, a + b)


def cond_mutual_info(s: QuantumState, regs_a: Registers, regs_b: Registers, regs_c: Registers) -> float:
    """I(A:B|C) = S(AC) + S(BC) - S(ABC) - S(C)."""
    a, b, c = names_of(regs_a), names_of(regs_b), names_of(regs_c)
    _check_disjoint(a, b, c)
    return (von_neumann_entropy(s, a + c) + von_neumann_entropy(s, b + c)
            - von_neumann_entropy(s, a + b + c) - von_neumann_entropy(s, c))


def _same_layout(a: QuantumState, b: QuantumState):
    if a.layout != b.layout:
        raise AddressingError(f"layout mismatch: {a.layout.registers} vs {b.layout.registers}")


def psd_factor(m: np.ndarray, floor: float = FACTOR_FLOOR) -> np.ndarray:
    """L with m = L L^dag, keeping only eigenvalues above ``floor``.

    Dropping the eigen-noise of rank-deficient inputs matters: its square root
    (about 1e-8 for noise at 1e-16) would otherwise leak into fidelities.
    """
    w, v = np.linalg.eigh((m + m.conj().T) / 2)
    keep = w > floor
    return v[:, keep] * np.sqrt(w[keep])[None, :]


def fidelity_matrices(a, b) -> float:
    """Root fidelity of two vectors or density matrices."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim == 1 and b.ndim == 1:
        return float(min(1.0, abs(np.vdot(a, b))))
    if a.ndim == 1:
        return float(min(1.0, np.sqrt(max(0.0, np.real(np.vdot(a, b @ a))))))
    if b.ndim == 1:
        return float(min(1.0, np.sqrt(max(0.0, np.real(np.vdot(b, a @ b))))))
    # ||sqrt(a) sqrt(b)||_1 = ||La^dag Lb||_1 for any factorizations a = La La^dag, b = Lb Lb^dag
    la, lb = psd_factor(a), psd_factor(b)
    if la.shape[1] == 0 or lb.shape[1] == 0:
        return 0.0
    return float(min(1.0, np.linalg.svd(la.conj().T @ lb, compute_uv=False).sum()))


def fidelity(a: QuantumState, b: QuantumState) -> float:
    """Uhlmann root fidelity ``||sqrt(a) sqrt(b)||_1`` (not squared)."""
    _same_layout(a, b)
    return fidelity_matrices(a.data, b.data)


def trace_distance_matrices(a: np.ndarray, b: np.ndarray) -> float:
    w = np.linalg.eigvalsh(a - b)
    return float(0.5 * np.abs(w).sum())


def trace_distance(a: QuantumState, b: QuantumState) -> float:
    _same_layout(a, b)
    if a.is_pure and b.is_pure:
        # closed form for two pure states
        return float(np.sqrt(max(0.0, 1 - abs(np.vdot(a.data, b.data)) ** 2)))
    return trace_distance_matrices(a.density_matrix(), b.density_matrix())


def fvdg_band(a: QuantumState, b: QuantumState) -> tuple[float, float]:
    """(1 - F, sqrt(1 - F^2)), which brackets the trace distance."""
    f = fidelity(a, b)
    return 1.0 - f, float(np.sqrt(max(0.0, 1.0 - f * f)))


def g_func(delta: float) -> float:
    """g(d) = (1+d) log(1+d) - d log d, with g(0) = 0."""
    if delta < 0:
        raise ValueError(f"g_func needs delta >= 0, got {delta}")
    if delta == 0:
        return 0.0
    return float(((1 + delta) * np.log(1 + delta) - delta * np.log(delta)) * LOG2E)


def afw_bound(delta: float, dim_u: int) -> float:
    """Alicki-Fannes-Winter bound on |S(U|V)_rho - S(U|V)_sigma| at trace distance delta."""
    if delta < 0:
        raise ValueError(f"afw_bound needs delta >= 0, got {delta}")
    if dim_u < 1:
        raise ValueError(f"afw_bound needs dim_u >= 1, got {dim_u}")
    return 2 * delta * np.log2(dim_u) + g_func(delta)


def fannes_audenaert_bound(delta: float, dim: int) -> float:
    """Sharp Fannes-Audenaert bound on |S(rho) - S(sigma)| at trace distance delta."""
    if not 0 <= delta <= 1:
        raise ValueError(f"fannes_audenaert_bound needs delta in [0, 1], got {delta}")
    if dim < 2:
        raise ValueError(f"fannes_audenaert_bound needs dim >= 2, got {dim}")
    if delta <= 1 - 1 / dim:
        return delta * np.log2(dim - 1) + binary_entropy(delta)
    return float(np.log2(dim))


def matrix_log2(rho: np.ndarray) -> np.ndarray:
    """log2 of a positive definite matrix (used in relative-entropy style checks)."""
    return scipy.linalg.logm(rho) * LOG2E


@dataclass(frozen=True)
class EntropyReport:
    value: float
    quantity: str
    registers: tuple[tuple[str, ...], ...]
    state_id: str = ""

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError("entropy value is not finite")
        if self.quantity == "I" and len(self.registers) == 3 and self.value < -1e-9:
            raise ValueError(f"conditional mutual information {self.value} violates strong subadditivity")


_EXPR = re.compile(r"^\s*([SIH])\s*\((.*)\)\s*$")


def _split_names(text: str, available: tuple[str, ...]) -> tuple[str, ...]:
    """Split a register group such as ``AB``, ``A,B`` or ``A_1B_1`` into names.

    Comma separation is explicit; otherwise names are matched greedily, longest first.
    """
    text = text.strip()
    if not text:
        return ()
    if "," in text:
        out = tuple(t.strip() for t in text.split(",") if t.strip())
    else:
        by_len = sorted(available, key=len, reverse=True)
        out = []
        pos = 0
        while pos < len(text):
            if text[pos].isspace():
                pos += 1
                continue
            for n in by_len:
                if text.startswith(n, pos):
                    out.append(n)
                    pos += len(n)
                    break
            else:
                raise AddressingError(f"cannot parse register names in {text!r}; layout has {available}")
        out = tuple(out)
    for n in out:
        if n not in available:
            raise AddressingError(f"unknown register {n!r}; layout has {available}")
    return out


def parse_entropy_expression(expr: str, available: tuple[str, ...]) -> tuple[str, tuple[tuple[str, ...], ...]]:
    """Parse ``S(A)``, ``S(A|B)``, ``I(A:B)`` or ``I(A:B|C)`` into (kind, register groups)."""
    m = _EXPR.match(expr)
    if not m:
        raise ValueError(f"unrecognized entropy expression {expr!r}")
    kind, body = m.group(1), m.group(2)
    if kind == "H":
        kind = "S"
    cond = ()
    if "|" in body:
        body, ctext = body.split("|", 1)
        cond = _split_names(ctext, available)
    if kind == "S":
        if ":" in body:
            raise ValueError(f"entropy expression {expr!r} has ':' but is not a mutual information")
        groups = (_split_names(body, available),)
    else:
        if body.count(":") != 1:
            raise ValueError(f"mutual information {expr!r} needs exactly one ':'")
        left, right = body.split(":")
        groups = (_split_names(left, available), _split_names(right, available))
    if any(len(g) == 0 for g in groups):
        raise ValueError(f"empty register group in {expr!r}")
    return kind, groups + ((cond,) if cond else ())


def evaluate_expression(s: QuantumState, expr: str, state_id: str = "") -> EntropyReport:
    kind, groups = parse_entropy_expression(expr, s.layout.names)
    if kind == "S":
        value = von_neumann_entropy(s, groups[0]) if len(groups) == 1 else cond_entropy(s, *groups)
    else:
        value = mutual_info(s, *groups) if len(groups) == 2 else cond_mutual_info(s, *groups)
    return EntropyReport(value=value, quantity=kind, registers=groups, state_id=state_id)
