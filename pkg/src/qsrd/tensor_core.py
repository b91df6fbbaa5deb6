"""Labeled multipartite linear algebra.

Every multipartite object carries a :class:`SystemLayout`, an ordered list of
named registers.  Index order is row-major over that list (the leftmost
register varies slowest), so ``np.kron(a, b)`` matches ``layout_a + layout_b``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

ATOL = 1e-10
# eigenvalues in [-NEG_CLAMP, 0) are PSD drift and get clamped to zero
NEG_CLAMP = 1e-10

Registers = Union[str, Iterable[str]]


class AddressingError(ValueError):
    """Unknown, duplicated or colliding register names."""


class StateError(ValueError):
    """Data that violates the state or operator invariants."""


def names_of(regs: Registers) -> tuple[str, ...]:
    """Normalize a register argument: a single name or an iterable of names."""
    if isinstance(regs, str):
        return (regs,)
    return tuple(regs)


@dataclass(frozen=True)
class SystemLayout:
    registers: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        regs = tuple((str(n), int(d)) for n, d in self.registers)
        seen = set()
        for name, dim in regs:
            if name in seen:
                raise AddressingError(f"duplicate register name {name!r}")
            if dim < 1:
                raise ValueError(f"register {name!r} has non-positive dimension {dim}")
            seen.add(name)
        object.__setattr__(self, "registers", regs)

    @classmethod
    def of(cls, *pairs: tuple[str, int]) -> "SystemLayout":
        return cls(tuple(pairs))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.registers)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.registers)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64)) if self.registers else 1

    def __len__(self):
        return len(self.registers)

    def __iter__(self):
        return iter(self.registers)

    def __contains__(self, name) -> bool:
        return name in self.names

    def __add__(self, other: "SystemLayout") -> "SystemLayout":
        clash = set(self.names) & set(other.names)
        if clash:
            raise AddressingError(f"register names collide: {sorted(clash)}")
        return SystemLayout(self.registers + other.registers)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise AddressingError(f"unknown register {name!r}; layout has {self.names}") from None

    def indices(self, regs: Registers) -> list[int]:
        return [self.index(n) for n in names_of(regs)]

    def dim(self, regs: Registers) -> int:
        d = 1
        for i in self.indices(regs):
            d *= self.registers[i][1]
        return d

    def select(self, regs: Registers) -> "SystemLayout":
        """Sub-layout with the given registers, in the given order."""
        return SystemLayout(tuple(self.registers[i] for i in self.indices(regs)))

    def without(self, regs: Registers) -> "SystemLayout":
        drop = set(names_of(regs))
        for n in drop:
            self.index(n)
        return SystemLayout(tuple(r for r in self.registers if r[0] not in drop))

    def rename(self, mapping: Mapping[str, str]) -> "SystemLayout":
        for n in mapping:
            self.index(n)
        return SystemLayout(tuple((mapping.get(n, n), d) for n, d in self.registers))

    def ordered(self, regs: Registers) -> tuple[str, ...]:
        """The given names sorted into layout order."""
        wanted = set(names_of(regs))
        for n in wanted:
            self.index(n)
        return tuple(n for n in self.names if n in wanted)

    def replicate(self, n: int) -> "SystemLayout":
        """n copies with names ``name_i`` (1-based), copy-major order."""
        return SystemLayout(tuple((f"{name}_{i}", d) for i in range(1, n + 1) for name, d in self.registers))


def _perm_tensor_axes(dims: Sequence[int], order: Sequence[int]) -> tuple[int, ...]:
    return tuple(dims[i] for i in order)


def permute_vector(vec: np.ndarray, dims: Sequence[int], order: Sequence[int]) -> np.ndarray:
    """Reorder the tensor factors of a vector; ``order[k]`` is the old position of new factor k."""
    return vec.reshape(dims).transpose(order).reshape(-1)


def permute_matrix(mat: np.ndarray, dims: Sequence[int], order: Sequence[int]) -> np.ndarray:
    n = len(dims)
    t = mat.reshape(tuple(dims) * 2)
    t = t.transpose(tuple(order) + tuple(n + i for i in order))
    d = int(np.prod(dims, dtype=np.int64))
    return t.reshape(d, d)


def reduced_from_vector(vec: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Reduced density matrix on ``keep`` (in that order) of a pure vector."""
    rest = [i for i in range(len(dims)) if i not in keep]
    t = vec.reshape(dims).transpose(list(keep) + rest)
    dk = int(np.prod([dims[i] for i in keep], dtype=np.int64))
    m = t.reshape(dk, -1)
    return m @ m.conj().T


def reduced_from_matrix(mat: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    rest = [i for i in range(len(dims)) if i not in keep]
    order = list(keep) + rest
    dk = int(np.prod([dims[i] for i in keep], dtype=np.int64))
    dr = int(np.prod([dims[i] for i in rest], dtype=np.int64))
    t = permute_matrix(mat, dims, order).reshape(dk, dr, dk, dr)
    return np.einsum("ijkj->ik", t)


def clamp_spectrum(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.size and w.min() < -NEG_CLAMP:
        raise StateError(f"eigenvalue {w.min():.3e} below PSD tolerance")
    return np.where(w < 0, 0.0, w)


@dataclass(frozen=True, eq=False)
class Operator:
    layout: SystemLayout
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        d = self.layout.total_dim
        if m.shape != (d, d):
            raise StateError(f"operator of shape {m.shape} does not match layout dimension {d}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def is_hermitian(self, atol: float = ATOL) -> bool:
        return bool(np.allclose(self.matrix, self.matrix.conj().T, atol=atol, rtol=0))

    def permuted(self, order: Registers) -> "Operator":
        names = names_of(order)
        if set(names) != set(self.layout.names) or len(names) != len(self.layout):
            raise AddressingError(f"{names} is not a permutation of {self.layout.names}")
        idx = self.layout.indices(names)
        return Operator(self.layout.select(names), permute_matrix(self.matrix, self.layout.dims, idx))

    def rename(self, mapping: Mapping[str, str]) -> "Operator":
        return Operator(self.layout.rename(mapping), self.matrix)


@dataclass(frozen=True, eq=False)
class QuantumState:
    """A normalized state: ``data`` is an amplitude vector (pure) or a density matrix."""

    layout: SystemLayout
    data: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        a = np.array(self.data, dtype=complex)
        d = self.layout.total_dim
        if a.ndim == 1:
            if a.shape != (d,):
                raise StateError(f"amplitude vector of length {a.size} does not match layout dimension {d}")
            if self.validate:
                nrm = np.linalg.norm(a)
                if abs(nrm - 1) > ATOL:
                    raise StateError(f"amplitude vector has norm {nrm:.12g}, expected 1")
        elif a.ndim == 2:
            if a.shape != (d, d):
                raise StateError(f"density matrix of shape {a.shape} does not match layout dimension {d}")
            if self.validate:
                if not np.allclose(a, a.conj().T, atol=ATOL, rtol=0):
                    raise StateError("density matrix is not Hermitian")
                tr = np.trace(a).real
                if abs(tr - 1) > ATOL:
                    raise StateError(f"density matrix has trace {tr:.12g}, expected 1")
                if np.linalg.eigvalsh(a).min() < -NEG_CLAMP:
                    raise StateError("density matrix is not positive semidefinite")
        else:
            raise StateError("state data must be a vector or a square matrix")
        a.setflags(write=False)
        object.__setattr__(self, "data", a)

    @classmethod
    def pure(cls, layout: SystemLayout, amplitudes) -> "QuantumState":
        return cls(layout, np.asarray(amplitudes, dtype=complex).reshape(-1))

    @classmethod
    def basis(cls, layout: SystemLayout, index: int | Sequence[int]) -> "QuantumState":
        if not isinstance(index, int):
            index = int(np.ravel_multi_index(tuple(index), layout.dims))
        v = np.zeros(layout.total_dim, dtype=complex)
        v[index] = 1
        return cls(layout, v)

    @property
    def is_pure(self) -> bool:
        return self.data.ndim == 1

    @property
    def dims(self) -> tuple[int, ...]:
        return self.layout.dims

    def density_matrix(self) -> np.ndarray:
        if self.is_pure:
            return np.outer(self.data, self.data.conj())
        return self.data

    def reduced(self, regs: Registers) -> np.ndarray:
        """Reduced density matrix on ``regs``, factors in the given order."""
        keep = self.layout.indices(regs)
        if len(set(keep)) != len(keep):
            raise AddressingError(f"repeated register in {names_of(regs)}")
        if self.is_pure:
            return reduced_from_vector(self.data, self.dims, keep)
        return reduced_from_matrix(self.data, self.dims, keep)

    def spectrum(self, regs: Registers | None = None) -> np.ndarray:
        """Clamped eigenvalues of the reduced state on ``regs`` (default: whole state).

        For pure states the smaller side of the bipartition is diagonalized.
        """
        names = self.layout.names if regs is None else names_of(regs)
        keep = self.layout.indices(names)
        if self.is_pure:
            rest = [i for i in range(len(self.dims)) if i not in keep]
            if not keep or not rest:
                return np.array([1.0])
            dk = int(np.prod([self.dims[i] for i in keep]))
            dr = int(np.prod([self.dims[i] for i in rest]))
            m = self.data.reshape(self.dims).transpose(keep + rest).reshape(dk, dr)
            gram = m @ m.conj().T if dk <= dr else m.conj().T @ m
            return clamp_spectrum(np.linalg.eigvalsh(gram))
        return clamp_spectrum(np.linalg.eigvalsh(self.reduced(names)))

    def permuted(self, order: Registers) -> "QuantumState":
        """Explicit register reindexing; ``order`` must name every register."""
        names = names_of(order)
        if sorted(names) != sorted(self.layout.names):
            raise AddressingError(f"{names} is not a permutation of {self.layout.names}")
        idx = self.layout.indices(names)
        if self.is_pure:
            data = permute_vector(self.data, self.dims, idx)
        else:
            data = permute_matrix(self.data, self.dims, idx)
        return QuantumState(self.layout.select(names), data, validate=False)

    def rename(self, mapping: Mapping[str, str]) -> "QuantumState":
        return QuantumState(self.layout.rename(mapping), self.data, validate=False)

    def as_mixed(self) -> "QuantumState":
        return self if not self.is_pure else QuantumState(self.layout, self.density_matrix(), validate=False)


def tensor(a, b):
    """Tensor product of two states or two operators; layouts are concatenated."""
    layout = a.layout + b.layout
    if isinstance(a, QuantumState) and isinstance(b, QuantumState):
        if a.is_pure and b.is_pure:
            return QuantumState(layout, np.kron(a.data, b.data), validate=False)
        return QuantumState(layout, np.kron(a.density_matrix(), b.density_matrix()), validate=False)
    if isinstance(a, Operator) and isinstance(b, Operator):
        return Operator(layout, np.kron(a.matrix, b.matrix))
    raise TypeError("tensor needs two states or two operators")


def partial_trace(s: QuantumState, keep: Registers) -> QuantumState:
    """Reduced state on ``keep``; registers stay in layout order."""
    names = s.layout.ordered(keep)
    if len(names) == len(s.layout):
        return s
    return QuantumState(s.layout.select(names), s.reduced(names), validate=False)


def purify(s: QuantumState, ref_name: str) -> QuantumState:
    """Purification with a reference register of the full dimension of ``s``."""
    if ref_name in s.layout:
        raise AddressingError(f"reference name {ref_name!r} already in use")
    d = s.layout.total_dim
    ref = SystemLayout.of((ref_name, d))
    if s.is_pure:
        e0 = np.zeros(d, dtype=complex)
        e0[0] = 1
        return QuantumState(s.layout + ref, np.kron(s.data, e0), validate=False)
    w, v = np.linalg.eigh(s.data)
    w = clamp_spectrum(w)
    # column k of v is paired with reference basis vector k
    amp = (v * np.sqrt(w)[None, :]).reshape(-1)
    amp = amp / np.linalg.norm(amp)
    return QuantumState(s.layout + ref, amp)


def haar_sample(in_dim: int, out_dim: int, seed) -> np.ndarray:
    """Haar-distributed isometry (first ``in_dim`` columns of a Haar unitary).

    QR of a complex Ginibre matrix with the phases of ``diag(R)`` divided out.
    """
    if out_dim < in_dim:
        raise ValueError(f"isometry needs out_dim >= in_dim, got {out_dim} < {in_dim}")
    rng = np.random.default_rng(seed)
    z = (rng.standard_normal((out_dim, in_dim)) + 1j * rng.standard_normal((out_dim, in_dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diagonal(r) / np.abs(np.diagonal(r))
    return q * ph[None, :]


def random_pure_state(layout: SystemLayout, seed) -> QuantumState:
    return QuantumState(layout, haar_sample(1, layout.total_dim, seed)[:, 0])


def random_mixed_state(layout: SystemLayout, seed, rank: int | None = None) -> QuantumState:
    """Induced-measure random state: partial trace of a Haar vector with an ancilla of dim ``rank``."""
    d = layout.total_dim
    k = d if rank is None else rank
    v = haar_sample(1, d * k, seed)[:, 0].reshape(d, k)
    rho = v @ v.conj().T
    rho = (rho + rho.conj().T) / 2
    return QuantumState(layout, rho / np.trace(rho).real)
