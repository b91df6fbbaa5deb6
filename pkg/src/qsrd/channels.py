"""CPTP maps as Stinespring isometries plus a discard set.

A :class:`ChannelMap` is an :class:`IsometryMap` followed by tracing out the
registers listed in ``discard``.  Kraus and Choi forms are deliberately absent;
they only appear in the tests as independent oracles.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .tensor_core import (
    AddressingError,
    QuantumState,
    Registers,
    SystemLayout,
    haar_sample,
    names_of,
    permute_matrix,
    permute_vector,
    reduced_from_matrix,
    reduced_from_vector,
    tensor,
)

ISO_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class IsometryMap:
    in_layout: SystemLayout
    out_layout: SystemLayout
    matrix: np.ndarray
    params: np.ndarray | None = None

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        din, dout = self.in_layout.total_dim, self.out_layout.total_dim
        if m.shape != (dout, din):
            raise ValueError(f"isometry matrix has shape {m.shape}, layouts need {(dout, din)}")
        if dout < din:
            raise ValueError(f"isometry needs out_dim >= in_dim, got {dout} < {din}")
        err = np.abs(m.conj().T @ m - np.eye(din)).max()
        if err > ISO_TOL:
            raise ValueError(f"matrix is not an isometry: max |V^dag V - I| = {err:.3e}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        if self.params is not None:
            p = np.array(self.params, dtype=float)
            p.setflags(write=False)
            object.__setattr__(self, "params", p)

    @property
    def in_dim(self) -> int:
        return self.in_layout.total_dim

    @property
    def out_dim(self) -> int:
        return self.out_layout.total_dim

    def relabel(self, in_layout: SystemLayout | None = None, out_layout: SystemLayout | None = None) -> "IsometryMap":
        """Same matrix under new register names (dimensions must agree)."""
        il = in_layout or self.in_layout
        ol = out_layout or self.out_layout
        return IsometryMap(il, ol, self.matrix, self.params)


@dataclass(frozen=True, eq=False)
class ChannelMap:
    isometry: IsometryMap
    discard: tuple[str, ...] = ()

    def __post_init__(self):
        d = names_of(self.discard)
        for n in d:
            self.isometry.out_layout.index(n)
        object.__setattr__(self, "discard", d)

    @property
    def in_layout(self) -> SystemLayout:
        return self.isometry.in_layout

    @property
    def out_layout(self) -> SystemLayout:
        """Registers kept after the discard."""
        return self.isometry.out_layout.without(self.discard)


@dataclass(frozen=True, eq=False)
class CodePair:
    encoder: ChannelMap
    decoder: ChannelMap
    z_name: str = "Z"

    def __post_init__(self):
        if self.z_name not in self.encoder.out_layout:
            raise AddressingError(f"encoder output does not contain {self.z_name!r}")
        if self.z_name not in self.decoder.in_layout:
            raise AddressingError(f"decoder input does not contain {self.z_name!r}")
        if self.encoder.out_layout.dim(self.z_name) != self.decoder.in_layout.dim(self.z_name):
            raise ValueError("encoder and decoder disagree on the dimension of the sent register")

    @property
    def z_dim(self) -> int:
        return self.encoder.isometry.out_layout.dim(self.z_name)


@dataclass(frozen=True, eq=False)
class BlockCode:
    """An n-copy code with pre-shared pure resource on A0 B0.

    Per-copy registers carry the suffix ``_i`` (1-based).  The encoder maps
    ``alice_regs`` of every copy plus A0 to ``alice_out`` of every copy plus the
    message M (and a discarded environment); the decoder maps M, B0 and
    ``bob_regs`` of every copy to ``bob_out`` of every copy.
    """

    n: int
    resource: QuantumState
    encoder: ChannelMap
    decoder: ChannelMap
    alice_regs: tuple[str, ...] = ("A",)
    bob_regs: tuple[str, ...] = ("B",)
    ref_regs: tuple[str, ...] = ("R",)
    alice_out: tuple[str, ...] = ("At",)
    bob_out: tuple[str, ...] = ("Bt",)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("block length must be at least 1")
        if not self.resource.is_pure:
            raise ValueError("the entanglement resource must be pure")
        if set(self.resource.layout.names) != {"A0", "B0"}:
            raise AddressingError("resource must live on registers A0, B0")
        if "M" not in self.encoder.out_layout or "M" not in self.decoder.in_layout:
            raise AddressingError("block encoder must emit M and the decoder must consume it")

    @property
    def m_dim(self) -> int:
        return self.encoder.isometry.out_layout.dim("M")

    @property
    def rate(self) -> float:
        return float(np.log2(self.m_dim) / self.n)


# ---------------------------------------------------------------------------
# parameterization


def n_params(out_dim: int) -> int:
    return out_dim * out_dim


def hermitian_from_params(params: np.ndarray, n: int) -> np.ndarray:
    """Hermitian H whose coordinates are (diag, Re upper, Im upper)."""
    params = np.asarray(params, dtype=float)
    if params.shape != (n * n,):
        raise ValueError(f"expected {n * n} parameters for dimension {n}, got {params.size}")
    iu = np.triu_indices(n, 1)
    m = len(iu[0])
    h = np.zeros((n, n), dtype=complex)
    h[np.diag_indices(n)] = params[:n]
    h[iu] = params[n:n + m] + 1j * params[n + m:]
    h = h + np.triu(h, 1).conj().T
    return h


def params_from_hermitian(h: np.ndarray) -> np.ndarray:
    n = h.shape[0]
    iu = np.triu_indices(n, 1)
    return np.concatenate([np.real(np.diag(h)), np.real(h[iu]), np.imag(h[iu])])


def isometry_from_params(params, in_dim: int, out_dim: int,
                         in_layout: SystemLayout | None = None,
                         out_layout: SystemLayout | None = None) -> IsometryMap:
    """V = expm(iH)[:, :in_dim] with H built from ``out_dim**2`` real coordinates."""
    if out_dim < in_dim:
        raise ValueError(f"isometry needs out_dim >= in_dim, got {out_dim} < {in_dim}")
    h = hermitian_from_params(params, out_dim)
    u = scipy.linalg.expm(1j * h)
    il = in_layout or SystemLayout.of(("in", in_dim))
    ol = out_layout or SystemLayout.of(("out", out_dim))
    return IsometryMap(il, ol, u[:, :in_dim], np.asarray(params, dtype=float))


def complete_to_unitary(v: np.ndarray) -> np.ndarray:
    """Square unitary whose first columns are ``v`` (the complement is deterministic)."""
    dout, din = v.shape
    if din == dout:
        return np.array(v, dtype=complex)
    comp = orthonormal_complement(v, dout - din)
    return np.concatenate([v, comp], axis=1)


def orthonormal_complement(v: np.ndarray, k: int) -> np.ndarray:
    """k orthonormal columns orthogonal to the column span of the isometry ``v``."""
    dout = v.shape[0]
    if k == 0:
        return np.zeros((dout, 0), dtype=complex)
    proj = np.eye(dout) - v @ v.conj().T
    u, s, _ = np.linalg.svd(proj)
    if s[k - 1] < 0.5:
        raise ValueError("not enough room for the requested complement")
    return u[:, :k]


def params_from_unitary(u: np.ndarray) -> np.ndarray:
    """Coordinates p with expm(i H(p)) = u (u is completed if it is a tall isometry)."""
    u = complete_to_unitary(np.asarray(u, dtype=complex))
    g = scipy.linalg.logm(u)
    h = -1j * g
    h = (h + h.conj().T) / 2
    return params_from_hermitian(h)


def haar_isometry(in_layout: SystemLayout, out_layout: SystemLayout, seed) -> IsometryMap:
    return IsometryMap(in_layout, out_layout, haar_sample(in_layout.total_dim, out_layout.total_dim, seed))


def identity_isometry(in_layout: SystemLayout, out_layout: SystemLayout) -> IsometryMap:
    """Embed the input basis as the first basis vectors of the output."""
    v = np.eye(out_layout.total_dim, in_layout.total_dim, dtype=complex)
    return IsometryMap(in_layout, out_layout, v)


# ---------------------------------------------------------------------------
# application


def apply_isometry(iso: IsometryMap, s: QuantumState, acting_on: Registers | None = None) -> QuantumState:
    """Apply V to the registers ``acting_on`` of ``s``.

    The result has the isometry's output registers first, then the untouched
    registers of ``s`` in their original order.  Pure inputs stay pure.
    """
    acting = names_of(acting_on) if acting_on is not None else iso.in_layout.names
    acted = s.layout.select(acting)
    if acted.dims != iso.in_layout.dims:
        raise AddressingError(f"registers {acting} have dims {acted.dims}, isometry expects {iso.in_layout.dims}")
    rest = s.layout.without(acting)
    clash = set(iso.out_layout.names) & set(rest.names)
    if clash:
        raise AddressingError(f"output registers collide with carried registers: {sorted(clash)}")
    order = s.layout.indices(acting) + s.layout.indices(rest.names)
    din, drest = acted.total_dim, rest.total_dim
    out_layout = iso.out_layout + rest
    v = iso.matrix
    if s.is_pure:
        m = permute_vector(s.data, s.dims, order).reshape(din, drest)
        return QuantumState(out_layout, (v @ m).reshape(-1), validate=False)
    rho = permute_matrix(s.data, s.dims, order).reshape(din, drest, din, drest)
    t = np.einsum("ai,ibjc,dj->abdc", v, rho, v.conj(), optimize=True)
    dout = iso.out_dim * drest
    return QuantumState(out_layout, t.reshape(dout, dout), validate=False)


def trace_out(s: QuantumState, regs: Registers) -> QuantumState:
    """Partial trace over ``regs``; the remaining registers keep their order."""
    drop = set(names_of(regs))
    if not drop:
        return s
    keep = [n for n in s.layout.names if n not in drop]
    return reduce_to(s, keep)


def reduce_to(s: QuantumState, keep: Sequence[str]) -> QuantumState:
    """Reduced state on ``keep`` in exactly the given order."""
    keep = list(keep)
    if keep == list(s.layout.names):
        return s
    idx = s.layout.indices(keep)
    if s.is_pure:
        rho = reduced_from_vector(s.data, s.dims, idx)
    else:
        rho = reduced_from_matrix(s.data, s.dims, idx)
    return QuantumState(s.layout.select(keep), rho, validate=False)


def apply_channel(c: ChannelMap, s: QuantumState, acting_on: Registers | None = None) -> QuantumState:
    """Apply a channel to some registers; output registers first, carried registers after."""
    return trace_out(apply_isometry(c.isometry, s, acting_on), c.discard)


def run_code(pair: CodePair, source: QuantumState) -> tuple[QuantumState, QuantumState]:
    """Return (phi, xi).

    ``phi`` is the pure post-encoder state, retaining Z and the encoder
    environment.  ``xi`` is the decoded state ordered as Alice's kept outputs,
    Bob's kept outputs, then the untouched source registers.
    """
    enc, dec = pair.encoder, pair.decoder
    phi = apply_isometry(enc.isometry, source, enc.in_layout.names)
    full = apply_isometry(dec.isometry, phi, dec.in_layout.names)
    alice_kept = [n for n in enc.out_layout.names if n not in dec.in_layout]
    bob_kept = list(dec.out_layout.names)
    rest = [n for n in source.layout.names if n not in enc.in_layout and n not in dec.in_layout]
    xi = reduce_to(full, alice_kept + bob_kept + rest)
    return phi, xi


# ---------------------------------------------------------------------------
# padding and time-sharing


def _embed_index_map(old_dims: Sequence[int], new_dims: Sequence[int]) -> np.ndarray:
    """Flat indices in the padded space of every basis vector of the old space."""
    grids = np.indices(tuple(old_dims)).reshape(len(old_dims), -1)
    return np.ravel_multi_index(tuple(grids), tuple(new_dims))


def pad_isometry(iso: IsometryMap, in_dims: Sequence[int], out_dims: Sequence[int],
                 env_name: str | None = None) -> IsometryMap:
    """Embed ``iso`` into larger register dimensions.

    Outputs are zero-padded.  New input basis vectors are mapped onto a fixed
    orthonormal complement of the old range; if the padded output is too small
    for that, the register ``env_name`` is grown until it fits.
    """
    in_dims, out_dims = list(in_dims), list(out_dims)
    if any(a < b for a, b in zip(in_dims, iso.in_layout.dims)) or any(a < b for a, b in zip(out_dims, iso.out_layout.dims)):
        raise ValueError("padding cannot shrink registers")
    din = int(np.prod(in_dims))
    if env_name is not None:
        k = iso.out_layout.index(env_name)
        other = int(np.prod(out_dims)) // out_dims[k]
        out_dims[k] = max(out_dims[k], -(-din // other))
    dout = int(np.prod(out_dims))
    if dout < din:
        raise ValueError("padded output too small; give an environment register to grow")
    rows = _embed_index_map(iso.out_layout.dims, out_dims)
    cols = _embed_index_map(iso.in_layout.dims, in_dims)
    m = np.zeros((dout, din), dtype=complex)
    m[np.ix_(rows, cols)] = iso.matrix
    missing = np.setdiff1d(np.arange(din), cols)
    if missing.size:
        m[:, missing] = orthonormal_complement(m[:, cols], missing.size)
    il = SystemLayout(tuple((n, d) for n, d in zip(iso.in_layout.names, in_dims)))
    ol = SystemLayout(tuple((n, d) for n, d in zip(iso.out_layout.names, out_dims)))
    return IsometryMap(il, ol, m)


def _max_dims(l1: SystemLayout, l2: SystemLayout) -> list[int]:
    if l1.names != l2.names:
        raise AddressingError(f"cannot time-share maps on different registers: {l1.names} vs {l2.names}")
    return [max(a, b) for a, b in zip(l1.dims, l2.dims)]


def _flag_merge(layout: SystemLayout, name: str) -> SystemLayout:
    return SystemLayout(tuple((n, d * 2 if n == name else d) for n, d in layout))


def _attach_flag(m: np.ndarray, layout: SystemLayout, name: str, k: int) -> np.ndarray:
    """Rows of ``m`` tensored with flag |k> appended as the last factor of register ``name``."""
    dims = list(layout.dims)
    j = layout.index(name)
    t = m.reshape(dims + [m.shape[1]])
    e = np.zeros(2)
    e[k] = 1
    t = np.tensordot(t, e, axes=0)  # flag axis last
    t = np.moveaxis(t, -1, j + 1)
    dims[j] *= 2
    return t.reshape(int(np.prod(dims)), m.shape[1])


def _single_env(c: ChannelMap) -> str:
    if len(c.discard) != 1:
        raise ValueError("time-sharing needs exactly one discarded environment register per map")
    return c.discard[0]


def timeshare(code1: CodePair, code2: CodePair, p: float) -> CodePair:
    """Flag-register mixture of two codes with weight p on ``code1``.

    The encoder is  sqrt(p) U1 (x) |1>_Z'|1>_W' + sqrt(1-p) U2 (x) |2>_Z'|2>_W'
    and the decoder applies the k-th decoder controlled on Z', recording k in
    its environment.  Z' is merged into Z as its last factor.
    """
    if not 0 <= p <= 1:
        raise ValueError(f"time-sharing weight must lie in [0, 1], got {p}")
    if code1.z_name != code2.z_name:
        raise AddressingError("codes use different names for the sent register")
    z = code1.z_name
    e1, e2 = code1.encoder, code2.encoder
    d1, d2 = code1.decoder, code2.decoder
    w, v = _single_env(e1), _single_env(d1)
    if _single_env(e2) != w or _single_env(d2) != v:
        raise AddressingError("codes use different environment names")
    if e1.in_layout != e2.in_layout:
        raise AddressingError("encoders act on different source registers")

    enc_out = _max_dims(e1.isometry.out_layout, e2.isometry.out_layout)
    encs = [pad_isometry(e.isometry, e.in_layout.dims, enc_out) for e in (e1, e2)]
    zdim = enc_out[e1.isometry.out_layout.index(z)]

    dec_in = _max_dims(d1.in_layout, d2.in_layout)
    dec_in[d1.in_layout.index(z)] = zdim
    dec_out = _max_dims(d1.isometry.out_layout, d2.isometry.out_layout)
    decs = [pad_isometry(d.isometry, dec_in, dec_out, env_name=v) for d in (d1, d2)]
    vdim = max(dd.out_layout.dim(v) for dd in decs)
    dec_out[d1.isometry.out_layout.index(v)] = vdim
    decs = [pad_isometry(dd, dec_in, dec_out) for dd in decs]

    weights = (np.sqrt(p), np.sqrt(1 - p))
    eo = encs[0].out_layout
    enc_m = sum(weights[k] * _attach_flag(_attach_flag(encs[k].matrix, eo, z, k), _flag_merge(eo, z), w, k)
                for k in range(2))
    enc_layout = _flag_merge(_flag_merge(eo, z), w)
    encoder = ChannelMap(IsometryMap(e1.in_layout, enc_layout, enc_m), (w,))

    # decoder: input (..., Z x Z', ...) ; column for flag k uses decoder k and writes k into V'
    di = decs[0].in_layout
    do = decs[0].out_layout
    din_new = _flag_merge(di, z)
    dout_new = _flag_merge(do, v)
    zi = di.index(z)
    dec_m = np.zeros((dout_new.total_dim, din_new.total_dim), dtype=complex)
    in_dims = list(di.dims)
    for k in range(2):
        block = _attach_flag(decs[k].matrix, do, v, k)  # rows in dout_new, cols in di
        # scatter columns to the inputs whose Z' flag equals k
        grid = np.indices(tuple(in_dims)).reshape(len(in_dims), -1)
        new_grid = grid.copy()
        new_grid[zi] = grid[zi] * 2 + k
        dims_new = list(in_dims)
        dims_new[zi] *= 2
        cols = np.ravel_multi_index(tuple(new_grid), tuple(dims_new))
        dec_m[:, cols] = block
    decoder = ChannelMap(IsometryMap(din_new, dout_new, dec_m), (v,))
    return CodePair(encoder, decoder, z)


# ---------------------------------------------------------------------------
# block codes


def _copy_names(names: Sequence[str], i: int) -> list[str]:
    return [f"{n}_{i}" for n in names]


def block_source(source: QuantumState, n: int) -> QuantumState:
    """psi^{(x) n} with registers renamed ``name_i``."""
    out = None
    for i in range(1, n + 1):
        c = source.rename({nm: f"{nm}_{i}" for nm in source.layout.names})
        out = c if out is None else tensor(out, c)
    return out


def block_input(block: BlockCode, source: QuantumState) -> QuantumState:
    return tensor(block_source(source, block.n), block.resource)


def block_output(block: BlockCode, source: QuantumState, keep_env: bool = False) -> tuple[QuantumState, QuantumState]:
    """Return (sigma, xi) for a block code.

    ``sigma`` is the post-encoder state (pure, with the encoder environment).
    ``xi`` is the decoded state on At^n Bt^n R^n, copy-major within each group.
    """
    s0 = block_input(block, source)
    sigma = apply_isometry(block.encoder.isometry, s0, block.encoder.in_layout.names)
    full = apply_isometry(block.decoder.isometry, sigma, block.decoder.in_layout.names)
    n = block.n
    keep = ([f"{a}_{i}" for i in range(1, n + 1) for a in block.alice_out]
            + [f"{b}_{i}" for i in range(1, n + 1) for b in block.bob_out]
            + [f"{r}_{i}" for i in range(1, n + 1) for r in block.ref_regs])
    if keep_env:
        return sigma, full
    return sigma, reduce_to(full, keep)


def extract_single_copy_maps(block: BlockCode, i: int, source: QuantumState) -> CodePair:
    """Single-copy code (E_i, D_i) simulating copy i of a block code.

    E_i feeds A_i together with the other copies of the source and the resource
    into the block encoder, sends Z_i = M B0 B_{others}, keeps At_i and discards
    everything else.  D_i runs the block decoder on Z_i B_i and keeps Bt_i.
    """
    n = block.n
    if not 1 <= i <= n:
        raise ValueError(f"copy index {i} out of range 1..{n}")
    others = [j for j in range(1, n + 1) if j != i]
    b_i = _copy_names(block.bob_regs, i)

    # dummy copies and the resource, all held by Alice
    dummy = block.resource
    for j in others:
        c = source.rename({nm: f"{nm}_{j}" for nm in source.layout.names})
        dummy = tensor(c, dummy)
    src_i = source.layout.select(list(block.alice_regs)).rename({a: f"{a}_{i}" for a in block.alice_regs})

    b_other = [f"{b}_{j}" for j in others for b in block.bob_regs]
    z_regs = ["M", "B0"] + b_other
    at_i = _copy_names(block.alice_out, i)
    env_regs = ([f"{a}_{j}" for j in others for a in block.alice_out]
                + [f"{r}_{j}" for j in others for r in block.ref_regs]
                + list(block.encoder.discard))

    cols = []
    for col in range(src_i.total_dim):
        e = QuantumState.basis(src_i, col)
        s = tensor(e, dummy)
        out = apply_isometry(block.encoder.isometry, s, block.encoder.in_layout.names)
        out = out.permuted(at_i + z_regs + env_regs)
        cols.append(out.data)
    full_layout = out.layout
    enc_m = np.stack(cols, axis=1)
    at_layout = SystemLayout(tuple((a, full_layout.dim(f"{a}_{i}")) for a in block.alice_out))
    z_dim = full_layout.dim(z_regs)
    w_dim = full_layout.dim(env_regs)
    enc_in = source.layout.select(list(block.alice_regs))
    enc_out = at_layout + SystemLayout.of(("Z", z_dim), ("W", w_dim))
    encoder = ChannelMap(IsometryMap(enc_in, enc_out, enc_m), ("W",))

    # decoder: input Z (= M B0 B_others) then B_i
    dec = block.decoder.isometry
    in_names = z_regs + b_i
    dec_idx = dec.in_layout.indices(in_names)
    din_dims = dec.in_layout.dims
    bt_i = _copy_names(block.bob_out, i)
    bt_other = [f"{b}_{j}" for j in others for b in block.bob_out]
    out_names = bt_i + bt_other + list(block.decoder.discard)
    out_idx = dec.out_layout.indices(out_names)
    m = dec.matrix.reshape(tuple(dec.out_layout.dims) + tuple(din_dims))
    nout = len(dec.out_layout)
    m = m.transpose(out_idx + [nout + k for k in dec_idx])
    m = m.reshape(dec.out_dim, dec.in_dim)
    bt_layout = SystemLayout(tuple((b, dec.out_layout.dim(f"{b}_{i}")) for b in block.bob_out))
    v_dim = dec.out_layout.dim(bt_other + list(block.decoder.discard))
    dec_in = SystemLayout.of(("Z", z_dim)) + source.layout.select(list(block.bob_regs))
    dec_out = bt_layout + SystemLayout.of(("V", v_dim))
    decoder = ChannelMap(IsometryMap(dec_in, dec_out, m), ("V",))
    return CodePair(encoder, decoder, "Z")


def _resource(dim0: int, seed=None) -> QuantumState:
    lay = SystemLayout.of(("A0", dim0), ("B0", dim0))
    if seed is None:
        v = np.eye(dim0).reshape(-1) / np.sqrt(dim0)
        return QuantumState(lay, v)
    return QuantumState(lay, haar_sample(1, dim0 * dim0, seed)[:, 0])


def product_block_code(pair: CodePair, n: int, source: QuantumState,
                       alice_regs=("A",), bob_regs=("B",), ref_regs=("R",)) -> BlockCode:
    """n independent copies of a single-copy code; M = Z^n and a trivial resource."""
    enc, dec = pair.encoder, pair.decoder
    alice_out = tuple(r for r in enc.out_layout.names if r != pair.z_name)
    bob_out = tuple(dec.out_layout.names)
    w = _single_env(enc)
    v = _single_env(dec)
    bob_regs = tuple(b for b in bob_regs if b in source.layout)
    zd = pair.z_dim
    # encoder: apply the single-copy isometry to each copy, then regroup
    e_in = SystemLayout(tuple((f"{nm}_{i}", d) for i in range(1, n + 1) for nm, d in enc.in_layout)) \
        + SystemLayout.of(("A0", 1))
    e_out_copies = SystemLayout(tuple((f"{nm}_{i}", d) for i in range(1, n + 1) for nm, d in enc.isometry.out_layout))
    m = np.array([[1.0 + 0j]])
    for _ in range(n):
        m = np.kron(m, enc.isometry.matrix)
    # reorder outputs: At_i..., Z_1..Z_n -> M, W_1..W_n -> W
    at_names = [f"{a}_{i}" for i in range(1, n + 1) for a in alice_out]
    z_names = [f"{pair.z_name}_{i}" for i in range(1, n + 1)]
    w_names = [f"{w}_{i}" for i in range(1, n + 1)]
    order = e_out_copies.indices(at_names + z_names + w_names)
    t = m.reshape(tuple(e_out_copies.dims) + (m.shape[1],))
    t = t.transpose(order + [len(e_out_copies)])
    at_layout = e_out_copies.select(at_names)
    e_out = at_layout + SystemLayout.of(("M", zd ** n), ("W", e_out_copies.dim(w_names)))
    encoder = ChannelMap(IsometryMap(e_in, e_out, t.reshape(e_out.total_dim, e_in.total_dim)), ("W",))

    # decoder: inputs M (=Z_1..Z_n), B0, B_1..B_n
    d_in_copies = SystemLayout(tuple((f"{nm}_{i}", d) for i in range(1, n + 1) for nm, d in dec.in_layout))
    d_out_copies = SystemLayout(tuple((f"{nm}_{i}", d) for i in range(1, n + 1) for nm, d in dec.isometry.out_layout))
    m = np.array([[1.0 + 0j]])
    for _ in range(n):
        m = np.kron(m, dec.isometry.matrix)
    b_names = [f"{b}_{i}" for i in range(1, n + 1) for b in bob_regs]
    in_order = d_in_copies.indices(z_names + b_names)
    bt_names = [f"{b}_{i}" for i in range(1, n + 1) for b in bob_out]
    v_names = [f"{v}_{i}" for i in range(1, n + 1)]
    out_order = d_out_copies.indices(bt_names + v_names)
    nout = len(d_out_copies)
    t = m.reshape(tuple(d_out_copies.dims) + tuple(d_in_copies.dims))
    t = t.transpose(out_order + [nout + k for k in in_order])
    d_in = SystemLayout.of(("M", zd ** n), ("B0", 1)) + d_in_copies.select(b_names)
    d_out = d_out_copies.select(bt_names) + SystemLayout.of(("V", d_out_copies.dim(v_names)))
    decoder = ChannelMap(IsometryMap(d_in, d_out, t.reshape(d_out.total_dim, d_in.total_dim)), ("V",))
    return BlockCode(n, _resource(1), encoder, decoder, tuple(enc.in_layout.names), bob_regs,
                     tuple(ref_regs), alice_out, bob_out)


def random_block_code(source: QuantumState, n: int, seed, m_dim: int = 2, res_dim: int = 2,
                      at_dim: int = 1, bt_dim: int | None = None, w_dim: int | None = None,
                      v_dim: int | None = None,
                      alice_regs=("A",), bob_regs=("B",), ref_regs=("R",)) -> BlockCode:
    """Haar-random block code with a Haar-random pure resource on A0 B0."""
    rng = np.random.default_rng(seed)
    seeds = rng.integers(0, 2 ** 63 - 1, size=3)
    bob_regs = tuple(b for b in bob_regs if b in source.layout)
    lay = source.layout
    a_dim = lay.dim(list(alice_regs))
    b_dim = lay.dim(list(bob_regs)) if bob_regs else 1
    if bt_dim is None:
        bt_dim = a_dim * b_dim
    e_in = SystemLayout(tuple((f"{nm}_{i}", lay.dim(nm)) for i in range(1, n + 1) for nm in alice_regs)) \
        + SystemLayout.of(("A0", res_dim))
    at = SystemLayout.of(*[(f"At_{i}", at_dim) for i in range(1, n + 1)])
    base = at.total_dim * m_dim
    if w_dim is None:
        w_dim = max(1, -(-e_in.total_dim // base))
    e_out = at + SystemLayout.of(("M", m_dim), ("W", w_dim))
    encoder = ChannelMap(haar_isometry(e_in, e_out, seeds[0]), ("W",))
    d_in = SystemLayout.of(("M", m_dim), ("B0", res_dim)) + SystemLayout(
        tuple((f"{nm}_{i}", lay.dim(nm)) for i in range(1, n + 1) for nm in bob_regs))
    bt = SystemLayout.of(*[(f"Bt_{i}", bt_dim) for i in range(1, n + 1)])
    if v_dim is None:
        v_dim = max(1, -(-d_in.total_dim // bt.total_dim))
    d_out = bt + SystemLayout.of(("V", v_dim))
    decoder = ChannelMap(haar_isometry(d_in, d_out, seeds[1]), ("V",))
    return BlockCode(n, _resource(res_dim, seeds[2]), encoder, decoder, tuple(alice_regs), bob_regs,
                     tuple(ref_regs), ("At",), ("Bt",))
