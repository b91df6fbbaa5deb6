"""Numerical upper bounds on Q'(D), the minimum distortion D0, and swept curves.

Every reported rate is witnessed by a concrete code pair whose rate and
distortion are recomputed in numpy from the final isometries, so the JAX search
path never certifies a number on its own.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .channels import ChannelMap, CodePair, IsometryMap, identity_isometry, isometry_from_params, run_code, timeshare
from .distortion import (
    DistortionMeasure,
    EnsembleSource,
    ensemble_qsr_observable,
    ensemble_schumacher_observable,
    evaluate,
    observable_measure,
    qsr_observable,
    schumacher_observable,
)
from .entropics import cond_mutual_info, g_func, mutual_info, von_neumann_entropy
from .optimize import (
    FEASTOL,
    FiniteDifferenceEngine,
    JaxEngine,
    KernelShape,
    better,
    constrained_search,
    minimize_distortion,
    random_start,
    restart_seed,
)
from .tensor_core import AddressingError, Operator, QuantumState, StateError, SystemLayout, permute_matrix

DEFAULT_RESTARTS = 32
RESERVED = ("Z", "W", "V")


@dataclass(frozen=True, eq=False)
class RDInstance:
    """A pure source, a distortion measure and the register plumbing of the code.

    The encoder maps ``alice_regs`` to ``alice_out`` Z W and the decoder maps
    Z ``bob_regs`` to ``bob_out`` V.  All other source registers are the
    reference.  Caps left as None take the defaults documented in
    :func:`default_caps`.
    """

    source: QuantumState
    measure: DistortionMeasure
    alice_regs: tuple[str, ...]
    bob_regs: tuple[str, ...] = ()
    alice_out: SystemLayout = SystemLayout()
    bob_out: SystemLayout = SystemLayout()
    z_cap: int | None = None
    w_cap: int | None = None
    v_cap: int | None = None
    name: str = ""

    def __post_init__(self):
        if not self.source.is_pure:
            raise StateError("rate-distortion sources must be pure")
        object.__setattr__(self, "alice_regs", tuple(self.alice_regs))
        object.__setattr__(self, "bob_regs", tuple(self.bob_regs))
        for r in self.alice_regs + self.bob_regs:
            self.source.layout.index(r)
        if set(self.alice_regs) & set(self.bob_regs):
            raise AddressingError("a register cannot belong to both Alice and Bob")
        if not self.alice_regs:
            raise AddressingError("the encoder needs at least one input register")
        outs = self.alice_out.names + self.bob_out.names
        clash = set(outs) & (set(self.source.layout.names) | set(RESERVED))
        if clash or len(set(outs)) != len(outs):
            raise AddressingError(f"output register names collide: {sorted(clash) or outs}")
        for c in (self.z_cap, self.w_cap, self.v_cap):
            if c is not None and c < 1:
                raise ValueError("caps must be at least 1")
        xi = self.xi_layout
        for n, d in self.measure.layout:
            if n not in xi or xi.dim(n) != d:
                raise AddressingError(f"measure register {n!r} (dim {d}) is not a decoded register")

    @property
    def ref_regs(self) -> tuple[str, ...]:
        return tuple(n for n in self.source.layout.names if n not in self.alice_regs + self.bob_regs)

    @property
    def xi_layout(self) -> SystemLayout:
        return self.alice_out + self.bob_out + self.source.layout.select(self.ref_regs)

    def dim(self, regs) -> int:
        return self.source.layout.dim(regs) if regs else 1

    @property
    def caps(self) -> dict:
        return default_caps(self)

    def with_caps(self, z=None, w=None, v=None) -> "RDInstance":
        return replace(self, z_cap=z, w_cap=w, v_cap=v)


def default_caps(inst: RDInstance) -> dict:
    """Z = |A||At|, W = |A||At||Z|, V = ceil(|B||Z| / |Bt|) unless overridden."""
    a = inst.dim(inst.alice_regs)
    b = inst.dim(inst.bob_regs)
    at = inst.alice_out.total_dim
    bt = inst.bob_out.total_dim
    z = inst.z_cap or a * at
    w = inst.w_cap or a * at * z
    v = inst.v_cap or max(1, -(-(b * z) // bt))
    if at * z * w < a:
        raise ValueError(f"encoder output {at}*{z}*{w} smaller than its input {a}")
    if bt * v < b * z:
        raise ValueError(f"decoder output {bt}*{v} smaller than its input {b}*{z}")
    return {"z": z, "w": w, "v": v}


# ---------------------------------------------------------------------------
# instance factories


def _hat(layout: SystemLayout, names) -> SystemLayout:
    hat = {"A": "Ahat", "B": "Bhat", "C": "Chat"}
    return SystemLayout(tuple((hat[n], layout.dim(n)) for n in names))


def schumacher_instance(psi: QuantumState, **caps) -> RDInstance:
    """Source on A, R; Bob decodes Ahat; Alice keeps nothing."""
    m = schumacher_observable(psi)
    return RDInstance(psi, m, ("A",), (), SystemLayout(), _hat(psi.layout, ["A"]), name="schumacher", **caps)


def qsr_instance(psi: QuantumState, **caps) -> RDInstance:
    """Source on A, [C,] [B,] R; Alice keeps Chat, Bob decodes Ahat Bhat."""
    names = psi.layout.names
    alice = tuple(n for n in ("A", "C") if n in names)
    bob = tuple(n for n in ("B",) if n in names)
    m = qsr_observable(psi)
    return RDInstance(psi, m, alice, bob, _hat(psi.layout, [n for n in ("C",) if n in names]),
                      _hat(psi.layout, ["A"] + list(bob)), name="qsr", **caps)


def ensemble_instance(ens: EnsembleSource, **caps) -> RDInstance:
    """Purified ensemble source with the ensemble fidelity observable."""
    psi = ens.purified()
    names = ens.layout.names
    alice = tuple(n for n in ("A", "C") if n in names)
    bob = tuple(n for n in ("B",) if n in names)
    if names == ("A",):
        m = ensemble_schumacher_observable(ens)
    else:
        m = ensemble_qsr_observable(ens)
    return RDInstance(psi, m, alice, bob, _hat(ens.layout, [n for n in ("C",) if n in names]),
                      _hat(ens.layout, ["A"] + list(bob)), name=m.name, **caps)


def observable_instance(psi: QuantumState, op: Operator, alice_regs, bob_regs=(),
                        alice_out: SystemLayout = SystemLayout(), bob_out: SystemLayout = SystemLayout(),
                        **caps) -> RDInstance:
    return RDInstance(psi, observable_measure(op), tuple(alice_regs), tuple(bob_regs), alice_out, bob_out,
                      name="observable", **caps)


# ---------------------------------------------------------------------------
# codes and the numpy objective


def code_layouts(inst: RDInstance):
    c = inst.caps
    enc_in = inst.source.layout.select(inst.alice_regs)
    enc_out = inst.alice_out + SystemLayout.of(("Z", c["z"]), ("W", c["w"]))
    dec_in = SystemLayout.of(("Z", c["z"])) + inst.source.layout.select(inst.bob_regs)
    dec_out = inst.bob_out + SystemLayout.of(("V", c["v"]))
    return enc_in, enc_out, dec_in, dec_out


def code_from_params(inst: RDInstance, x: np.ndarray) -> CodePair:
    enc_in, enc_out, dec_in, dec_out = code_layouts(inst)
    ne = enc_out.total_dim ** 2
    e = isometry_from_params(x[:ne], enc_in.total_dim, enc_out.total_dim, enc_in, enc_out)
    d = isometry_from_params(x[ne:], dec_in.total_dim, dec_out.total_dim, dec_in, dec_out)
    return CodePair(ChannelMap(e, ("W",)), ChannelMap(d, ("V",)), "Z")


def trivial_code(inst: RDInstance) -> CodePair | None:
    """Z = |0>, Alice parks her input in W, the decoder embeds Z B into the first basis vectors."""
    enc_in, enc_out, dec_in, dec_out = code_layouts(inst)
    at = inst.alice_out.total_dim
    c = inst.caps
    if at * c["w"] < enc_in.total_dim:
        return None
    # |a> -> |0>_At |0>_Z |a>_W
    m = np.zeros((enc_out.total_dim, enc_in.total_dim), dtype=complex)
    for a in range(enc_in.total_dim):
        m[a, a] = 1  # At = 0 and Z = 0 occupy the leading block whenever a < w
    if enc_in.total_dim > c["w"]:
        # spill over into At when W alone is too small; Z stays |0>
        m[:] = 0
        for a in range(enc_in.total_dim):
            t, w = divmod(a, c["w"])
            m[(t * c["z"]) * c["w"] + w, a] = 1
    enc = IsometryMap(enc_in, enc_out, m)
    dec = identity_isometry(dec_in, dec_out)
    return CodePair(ChannelMap(enc, ("W",)), ChannelMap(dec, ("V",)), "Z")


def check_caps(pair: CodePair, inst: RDInstance):
    c = inst.caps
    eo = pair.encoder.isometry.out_layout
    do = pair.decoder.isometry.out_layout
    if eo.dim("Z") > c["z"] or eo.dim("W") > c["w"] or do.dim("V") > c["v"]:
        raise ValueError(f"code dims Z={eo.dim('Z')} W={eo.dim('W')} V={do.dim('V')} exceed caps {c}")


def objective(pair: CodePair, instance: RDInstance, enforce_caps: bool = True) -> tuple[float, float]:
    """(1/2 I(Z:R|B) of the post-encoder state, distortion of the decoded state)."""
    if enforce_caps:
        check_caps(pair, instance)
    phi, xi = run_code(pair, instance.source)
    rate = 0.5 * cond_mutual_info(phi, pair.z_name, instance.ref_regs, instance.bob_regs)
    return rate, evaluate(instance.measure, xi)


def aligned_observable(measure: DistortionMeasure, xi_layout: SystemLayout) -> np.ndarray:
    """The observable extended by identities and permuted to ``xi_layout`` order."""
    op = measure.observable
    missing = xi_layout.without(op.layout.names)
    full = np.kron(op.matrix, np.eye(missing.total_dim))
    lay = op.layout + missing
    return permute_matrix(full, lay.dims, lay.indices(xi_layout.names))


def kernel_shape(inst: RDInstance) -> KernelShape:
    c = inst.caps
    return KernelShape("rate", inst.dim(inst.alice_regs), inst.dim(inst.bob_regs), inst.dim(inst.ref_regs),
                       inst.alice_out.total_dim, c["z"], c["w"], inst.bob_out.total_dim, c["v"])


def make_engine(inst: RDInstance):
    shape = kernel_shape(inst)
    if inst.measure.is_observable:
        psi = inst.source.permuted(inst.alice_regs + inst.bob_regs + inst.ref_regs).data
        delta = aligned_observable(inst.measure, inst.xi_layout)
        s = inst.source
        const = von_neumann_entropy(s, inst.bob_regs + inst.ref_regs) - von_neumann_entropy(s, inst.bob_regs)
        return JaxEngine(shape, psi, delta, const)
    return FiniteDifferenceEngine(lambda x: objective(code_from_params(inst, x), inst), shape.n_params, shape.n_enc)


# ---------------------------------------------------------------------------
# points and curves


@dataclass
class RDPoint:
    D_target: float
    rate_bound: float
    distortion_achieved: float
    feasible: bool
    restarts_used: int
    seed: int
    z_cap: int
    metadata: dict = field(default_factory=dict)
    code: CodePair | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.feasible and self.rate_bound < -1e-9:
            raise ValueError(f"negative rate bound {self.rate_bound}")

    def to_record(self) -> dict:
        return {
            "D_target": self.D_target,
            "rate_bound": None if not math.isfinite(self.rate_bound) else self.rate_bound,
            "distortion_achieved": self.distortion_achieved,
            "feasible": self.feasible,
            "restarts_used": self.restarts_used,
            "seed": self.seed,
            "z_cap": self.z_cap,
            "metadata": self.metadata,
        }

    @classmethod
    def from_record(cls, r: dict) -> "RDPoint":
        rate = math.inf if r["rate_bound"] is None else r["rate_bound"]
        return cls(r["D_target"], rate, r["distortion_achieved"], r["feasible"], r["restarts_used"], r["seed"],
                   r["z_cap"], dict(r.get("metadata", {})))


@dataclass
class RDCurve:
    points: list[RDPoint]
    envelope: list[tuple[float, float]]
    d0_estimate: float
    raw_points: list[RDPoint] = field(default_factory=list)

    def check_invariants(self, tol: float = 1e-9):
        env = self.envelope
        for (d1, r1), (d2, r2) in zip(env, env[1:]):
            if r2 > r1 + tol:
                raise ValueError(f"envelope increases between D={d1} and D={d2}")
        for (d1, r1), (d2, r2), (d3, r3) in zip(env, env[1:], env[2:]):
            t = (d2 - d1) / (d3 - d1)
            if r2 > (1 - t) * r1 + t * r3 + tol:
                raise ValueError(f"envelope not convex at D={d2}")
        env_map = dict(env)
        for p in self.raw_points:
            if p.feasible and p.D_target in env_map and env_map[p.D_target] > p.rate_bound + tol:
                raise ValueError(f"envelope above the raw point at D={p.D_target}")

    def to_record(self) -> dict:
        return {
            "points": [p.to_record() for p in self.points],
            "raw_points": [p.to_record() for p in self.raw_points],
            "envelope": [[d, r] for d, r in self.envelope],
            "d0_estimate": self.d0_estimate,
        }

    @classmethod
    def from_record(cls, r: dict) -> "RDCurve":
        return cls([RDPoint.from_record(p) for p in r["points"]], [(d, v) for d, v in r["envelope"]],
                   r["d0_estimate"], [RDPoint.from_record(p) for p in r.get("raw_points", [])])


# ---------------------------------------------------------------------------
# estimators


def estimate_D0(instance: RDInstance, restarts: int = 8, seed: int = 0) -> float:
    """Smallest distortion found over the capped code space (an upper bound on D0)."""
    best = math.inf
    triv = trivial_code(instance)
    if triv is not None:
        best = objective(triv, instance)[1]
    engine = make_engine(instance)
    shape = kernel_shape(instance)
    for j in range(restarts):
        x0 = random_start(shape.enc_out, shape.dec_out, restart_seed(seed, j))
        res = minimize_distortion(engine, x0)
        best = min(best, objective(code_from_params(instance, res.x), instance)[1])
    return float(best)


def estimate_Qprime(instance: RDInstance, D_target: float, restarts: int = DEFAULT_RESTARTS, seed: int = 0,
                    feastol: float = FEASTOL) -> RDPoint:
    """Best feasible rate over ``restarts`` penalized searches (an upper bound on Q'(D) at the caps)."""
    if D_target < 0:
        raise ValueError("D_target must be non-negative")
    z = instance.caps["z"]
    triv = trivial_code(instance)
    if triv is not None:
        r0, d0 = objective(triv, instance)
        if d0 <= D_target + feastol:
            return RDPoint(D_target, max(r0, 0.0), d0, True, 0, seed, z, {"code": "trivial"}, triv)
    engine = make_engine(instance)
    shape = kernel_shape(instance)
    best = None
    best_key = None
    fallback = None  # least-infeasible candidate, reported when nothing is feasible
    for j in range(restarts):
        x0 = random_start(shape.enc_out, shape.dec_out, restart_seed(seed, j))
        res = constrained_search(engine, x0, D_target, feastol)
        pair = code_from_params(instance, res.x)
        rate, dist = objective(pair, instance)
        if dist <= D_target + feastol:
            if better((rate, dist), best_key):
                best_key = (rate, dist)
                best = (pair, rate, dist, j, res)
        elif fallback is None or dist < fallback[1]:
            fallback = (pair, dist)
    if best is None:
        dist = fallback[1] if fallback else math.nan
        return RDPoint(D_target, math.inf, dist, False, restarts, seed, z, {"engine": type(engine).__name__})
    pair, rate, dist, j, res = best
    meta = {"engine": type(engine).__name__, "best_restart": j, "restored": res.restored, "stages": res.stages}
    return RDPoint(D_target, max(rate, 0.0), dist, True, restarts, seed, z, meta, pair)


def lower_hull(pts: Sequence[tuple[float, float, int]]) -> list[tuple[float, float, int]]:
    """Lower convex hull (monotone chain) of (x, y, tag) points; ties in x keep the lowest y."""
    pts = sorted(pts, key=lambda p: (p[0], p[1]))
    uniq = []
    for p in pts:
        if uniq and abs(uniq[-1][0] - p[0]) <= 0:
            continue
        uniq.append(p)
    hull: list[tuple[float, float, int]] = []
    for p in uniq:
        while len(hull) >= 2:
            (x1, y1, _), (x2, y2, _) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) <= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    return hull


def _hull_value(hull, d: float):
    """(value, left vertex, right vertex, weight on left) of the hull at d, or None left of the hull."""
    if d < hull[0][0]:
        return None
    for (x1, y1, t1), (x2, y2, t2) in zip(hull, hull[1:]):
        if x1 <= d <= x2:
            p = (x2 - d) / (x2 - x1)
            return p * y1 + (1 - p) * y2, hull.index((x1, y1, t1)), hull.index((x2, y2, t2)), p
    return hull[-1][1], len(hull) - 1, len(hull) - 1, 1.0


def sweep_curve(instance: RDInstance, D_grid: Sequence[float], restarts: int = DEFAULT_RESTARTS, seed: int = 0,
                feastol: float = FEASTOL) -> RDCurve:
    """Per-point estimates, their lower convex envelope, and timeshare codes witnessing it.

    A code found for target D is also eligible for every larger target, so each
    feasible point is copied to the largest grid value before taking the hull;
    this makes the envelope non-increasing as well as convex.
    """
    grid = [float(d) for d in D_grid]
    if not grid:
        raise ValueError("empty distortion grid")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("distortion grid must be strictly ascending")
    raw = [estimate_Qprime(instance, d, restarts, seed, feastol) for d in grid]
    d0 = estimate_D0(instance, min(restarts, 8), seed)
    dmax = grid[-1]
    cands = []
    for k, p in enumerate(raw):
        if p.feasible:
            cands.append((p.D_target, p.rate_bound, k))
            cands.append((dmax, p.rate_bound, k))
    envelope: list[tuple[float, float]] = []
    points: list[RDPoint] = []
    if not cands:
        return RDCurve(list(raw), [], d0, raw)
    hull = lower_hull(cands)
    for k, d in enumerate(grid):
        hv = _hull_value(hull, d)
        if hv is None:
            points.append(raw[k])
            continue
        val, i1, i2, p = hv
        envelope.append((d, val))
        if raw[k].feasible and raw[k].rate_bound <= val + 1e-9:
            points.append(raw[k])
            continue
        points.append(_materialize(instance, raw, hull, d, i1, i2, p, seed, feastol))
    curve = RDCurve(points, envelope, d0, raw)
    curve.check_invariants()
    return curve


def _materialize(instance, raw, hull, d, i1, i2, p, seed, feastol) -> RDPoint:
    """Witness the envelope value at d by an explicit code."""
    k1, k2 = hull[i1][2], hull[i2][2]
    if i1 == i2 or p >= 1.0:
        src = raw[k1]
        meta = {"from": [src.D_target], "shifted": True}
        return RDPoint(d, src.rate_bound, src.distortion_achieved, True, src.restarts_used, seed, src.z_cap, meta,
                       src.code)
    if p <= 0.0:
        src = raw[k2]
        meta = {"from": [src.D_target], "shifted": True}
        return RDPoint(d, src.rate_bound, src.distortion_achieved, True, src.restarts_used, seed, src.z_cap, meta,
                       src.code)
    c1, c2 = raw[k1].code, raw[k2].code
    code = timeshare(c1, c2, p)
    rate, dist = objective(code, instance, enforce_caps=False)
    meta = {"timeshare": {"p": p, "from": [raw[k1].D_target, raw[k2].D_target]}}
    return RDPoint(d, max(rate, 0.0), dist, dist <= d + feastol, raw[k1].restarts_used, seed, code.z_dim, meta, code)


# ---------------------------------------------------------------------------
# analytic lower bands


def _band(half_info: float, D: float, ref_dim: int) -> float:
    if D < 0:
        raise ValueError("D must be non-negative")
    s = math.sqrt(D)
    return max(0.0, half_info - 2 * s * math.log2(ref_dim) - g_func(s))


def schumacher_lower_band(instance: RDInstance, D: float) -> float:
    """max(0, 1/2 I(A:R) - 2 sqrt(D) log|R| - g(sqrt(D))) for sources without Bob side information."""
    if instance.dim(instance.bob_regs) != 1:
        raise ValueError("the Schumacher band needs trivial B")
    s = instance.source
    return _band(0.5 * mutual_info(s, instance.alice_regs, instance.ref_regs), D, instance.dim(instance.ref_regs))


def qsr_lower_band(instance: RDInstance, D: float) -> float:
    """max(0, 1/2 I(A:R|B) - 2 sqrt(D) log|R| - g(sqrt(D)))."""
    s = instance.source
    a = ("A",) if "A" in instance.alice_regs else instance.alice_regs
    info = cond_mutual_info(s, a, instance.ref_regs, instance.bob_regs)
    return _band(0.5 * info, D, instance.dim(instance.ref_regs))
