"""Constrained search over pairs of Stinespring isometries.

Both solvers minimize an entropic objective f(encoder, decoder) subject to a
linear constraint ``Tr(xi Delta) <= D`` on the decoded state.  The objective is

* ``"rate"``: 1/2 I(Z:R|B) of the post-encoder state (Q' search), or
* ``"k"``: -1/2 I(W:X|Chat) of the post-encoder state (K search).

Each isometry is ``expm(iH)[:, :in_dim]`` with H Hermitian, and the parameter
vector concatenates the encoder and decoder coordinates.  Values and gradients
come from a JIT-compiled JAX kernel; a central-difference path covers
functional (non-observable) distortion measures.

Constraint handling is an augmented Lagrangian over the penalty schedule
``MU_SCHEDULE``; escalation stops at the first feasible stage.  If the last
stage is still infeasible a restoration pass minimizes the distortion alone.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.optimize

import jax

jax.config.update("jax_enable_x64", True)
import jax.numpy as jnp  # noqa: E402
import jax.scipy.linalg as jsl  # noqa: E402

from .channels import params_from_unitary  # noqa: E402
from .tensor_core import haar_sample  # noqa: E402

MU_SCHEDULE = (1e1, 1e2, 1e3, 1e4, 1e5, 1e6)
FEASTOL = 1e-6
FD_STEP = 1e-5
EIG_FLOOR = 1e-12
LN2 = float(np.log(2.0))
STAGE_MAXITER = 400


# ---------------------------------------------------------------------------
# JAX pieces


def _herm(p, n: int):
    iu0, iu1 = np.triu_indices(n, 1)
    m = len(iu0)
    h = jnp.zeros((n, n), dtype=jnp.complex128)
    h = h.at[np.arange(n), np.arange(n)].set(p[:n])
    off = p[n:n + m] + 1j * p[n + m:]
    h = h.at[iu0, iu1].set(off)
    h = h.at[iu1, iu0].set(jnp.conj(off))
    return h


def _iso(p, in_dim: int, out_dim: int):
    return jsl.expm(1j * _herm(p, out_dim))[:, :in_dim]


@jax.custom_jvp
def _entropy(rho):
    w = jnp.linalg.eigvalsh(rho)
    w = jnp.where(w > EIG_FLOOR, w, 1.0)
    return -jnp.sum(w * jnp.log(w)) / LN2


@_entropy.defjvp
def _entropy_jvp(primals, tangents):
    (rho,), (drho,) = primals, tangents
    w, v = jnp.linalg.eigh(rho)
    big = w > EIG_FLOOR
    ws = jnp.where(big, w, 1.0)
    val = -jnp.sum(ws * jnp.log(ws)) / LN2
    # dS = -Tr[(log2 rho + 1/ln 2) drho] with the spectrum clipped at the floor
    lg = (jnp.log(jnp.maximum(w, EIG_FLOOR)) + 1.0) / LN2
    dt = jnp.einsum("ia,ij,ja->a", jnp.conj(v), drho, v)
    return val, -jnp.real(jnp.sum(lg * dt))


def _gram_entropy(t, keep: Sequence[int]):
    """Entropy of the marginal of the pure tensor ``t`` on axes ``keep`` (smaller side)."""
    nd = t.ndim
    rest = [i for i in range(nd) if i not in keep]
    dk = int(np.prod([t.shape[i] for i in keep])) if keep else 1
    dr = int(np.prod([t.shape[i] for i in rest])) if rest else 1
    if dk == 1 or dr == 1:
        return jnp.asarray(0.0)
    m = jnp.transpose(t, list(keep) + rest).reshape(dk, dr)
    g = m @ jnp.conj(m).T if dk <= dr else jnp.conj(m).T @ m
    return _entropy(g)


@dataclass(frozen=True)
class KernelShape:
    mode: str  # "rate" or "k"
    a: int
    b: int
    r: int
    at: int
    z: int
    w: int
    bt: int
    v: int
    # K mode only: r = rp * x * xp
    rp: int = 1
    x: int = 1
    xp: int = 1

    @property
    def enc_in(self) -> int:
        return self.a

    @property
    def enc_out(self) -> int:
        return self.at * self.z * self.w

    @property
    def dec_in(self) -> int:
        return self.z * self.b

    @property
    def dec_out(self) -> int:
        return self.bt * self.v

    @property
    def n_enc(self) -> int:
        return self.enc_out ** 2

    @property
    def n_dec(self) -> int:
        return self.dec_out ** 2

    @property
    def n_params(self) -> int:
        return self.n_enc + self.n_dec


def _phi(s: KernelShape, xe, psi):
    e = _iso(xe, s.enc_in, s.enc_out)
    phi = jnp.einsum("Ia,abr->Ibr", e, psi)
    return phi.reshape(s.at, s.z, s.w, s.b, s.r)


def _objective(s: KernelShape, phi, const):
    if s.mode == "rate":
        # 1/2 [S(ZB) + S(BR) - S(ZBR) - S(B)], the last-but-one pair is a source constant
        return 0.5 * (_gram_entropy(phi, [1, 3]) - _gram_entropy(phi, [1, 3, 4]) + const)
    t = phi.reshape(s.at, s.z, s.w, s.b, s.rp, s.x, s.xp)
    # axes: 0 Chat, 2 W, 5 X
    i_wx = (_gram_entropy(t, [0, 2]) + _gram_entropy(t, [0, 5])
            - _gram_entropy(t, [0, 2, 5]) - _gram_entropy(t, [0]))
    return -0.5 * i_wx


def _distortion(s: KernelShape, xd, phi, delta):
    d = _iso(xd, s.dec_in, s.dec_out).reshape(s.bt, s.v, s.z, s.b)
    tau = jnp.einsum("uvzb,tzwbr->turvw", d, phi)
    t = tau.reshape(s.at * s.bt * s.r, s.v * s.w)
    return jnp.real(jnp.sum(jnp.conj(t) * (delta @ t)))


@functools.lru_cache(maxsize=None)
def _compiled(s: KernelShape):
    ne = s.n_enc

    def parts(x, psi, delta, const):
        phi = _phi(s, x[:ne], psi)
        return _objective(s, phi, const), _distortion(s, x[ne:], phi, delta)

    def loss(x, psi, delta, const, mu, lam, dtarget):
        f, dist = parts(x, psi, delta, const)
        g = dist - dtarget
        # Powell-Hestenes-Rockafellar term for g <= 0
        pen = (jnp.maximum(0.0, lam + mu * g) ** 2 - lam ** 2) / (2 * mu)
        return f + pen

    def dist_only(x, psi, delta):
        phi = _phi(s, x[:ne], psi)
        return _distortion(s, x[ne:], phi, delta)

    return (jax.jit(parts), jax.jit(jax.value_and_grad(loss)), jax.jit(jax.value_and_grad(dist_only)))


# ---------------------------------------------------------------------------
# engines


class Engine:
    """Objective/constraint oracle over the flat parameter vector."""

    n_params: int
    n_enc: int

    def parts(self, x) -> tuple[float, float]:
        raise NotImplementedError

    def loss_grad(self, x, mu, lam, dtarget) -> tuple[float, np.ndarray]:
        raise NotImplementedError

    def dist_grad(self, x) -> tuple[float, np.ndarray]:
        raise NotImplementedError


class JaxEngine(Engine):
    def __init__(self, shape: KernelShape, psi: np.ndarray, delta: np.ndarray, const: float):
        self.shape = shape
        self.n_params = shape.n_params
        self.n_enc = shape.n_enc
        self.psi = jnp.asarray(psi.reshape(shape.a, shape.b, shape.r), dtype=jnp.complex128)
        self.delta = jnp.asarray(delta, dtype=jnp.complex128)
        self.const = float(const)
        self._parts, self._loss, self._dist = _compiled(shape)

    def parts(self, x):
        f, d = self._parts(jnp.asarray(x), self.psi, self.delta, self.const)
        return float(f), float(d)

    def loss_grad(self, x, mu, lam, dtarget):
        v, g = self._loss(jnp.asarray(x), self.psi, self.delta, self.const, mu, lam, dtarget)
        return float(v), np.asarray(g, dtype=float)

    def dist_grad(self, x):
        v, g = self._dist(jnp.asarray(x), self.psi, self.delta)
        return float(v), np.asarray(g, dtype=float)


def central_difference(fn: Callable[[np.ndarray], float], x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (fn(x + e) - fn(x - e)) / (2 * step)
    return g


class FiniteDifferenceEngine(Engine):
    """Gradients by central differences of a numpy evaluator ``parts(x) -> (f, dist)``."""

    def __init__(self, parts: Callable[[np.ndarray], tuple[float, float]], n_params: int, n_enc: int):
        self._parts = parts
        self.n_params = n_params
        self.n_enc = n_enc

    def parts(self, x):
        return self._parts(np.asarray(x))

    def _loss(self, x, mu, lam, dtarget):
        f, dist = self._parts(x)
        g = dist - dtarget
        return f + (max(0.0, lam + mu * g) ** 2 - lam ** 2) / (2 * mu)

    def loss_grad(self, x, mu, lam, dtarget):
        x = np.asarray(x, dtype=float)
        return self._loss(x, mu, lam, dtarget), central_difference(lambda y: self._loss(y, mu, lam, dtarget), x)

    def dist_grad(self, x):
        x = np.asarray(x, dtype=float)
        fn = lambda y: self._parts(y)[1]  # noqa: E731
        return fn(x), central_difference(fn, x)


# ---------------------------------------------------------------------------
# search


@dataclass
class SearchResult:
    x: np.ndarray
    objective: float
    distortion: float
    feasible: bool
    stages: int
    restored: bool


def random_start(shape_enc_out: int, shape_dec_out: int, rng_seed) -> np.ndarray:
    """Parameters of a Haar-random encoder and decoder unitary."""
    rng = np.random.default_rng(rng_seed)
    s1, s2 = rng.integers(0, 2 ** 63 - 1, size=2)
    ue = haar_sample(shape_enc_out, shape_enc_out, s1)
    ud = haar_sample(shape_dec_out, shape_dec_out, s2)
    return np.concatenate([params_from_unitary(ue), params_from_unitary(ud)])


def _lbfgs(fun, x0, maxiter=STAGE_MAXITER):
    res = scipy.optimize.minimize(fun, x0, jac=True, method="L-BFGS-B",
                                  options={"maxiter": maxiter, "ftol": 1e-15, "gtol": 1e-10, "maxcor": 30})
    return res.x


def constrained_search(engine: Engine, x0: np.ndarray, dtarget: float, feastol: float = FEASTOL,
                       mu_schedule: Sequence[float] = MU_SCHEDULE) -> SearchResult:
    """Minimize f subject to dist <= dtarget from one starting point."""
    x = np.asarray(x0, dtype=float)
    lam = 0.0
    stages = 0
    for mu in mu_schedule:
        x = _lbfgs(lambda y: engine.loss_grad(y, mu, lam, dtarget), x)
        stages += 1
        f, dist = engine.parts(x)
        if dist <= dtarget + feastol:
            return SearchResult(x, f, dist, True, stages, False)
        lam = max(0.0, lam + mu * (dist - dtarget))
    x = _lbfgs(engine.dist_grad, x, maxiter=4 * STAGE_MAXITER)
    f, dist = engine.parts(x)
    return SearchResult(x, f, dist, dist <= dtarget + feastol, stages, True)


def minimize_distortion(engine: Engine, x0: np.ndarray) -> SearchResult:
    x = _lbfgs(engine.dist_grad, np.asarray(x0, dtype=float), maxiter=4 * STAGE_MAXITER)
    f, dist = engine.parts(x)
    return SearchResult(x, f, dist, True, 0, True)


def restart_seed(seed: int, j: int):
    """Seed for restart j; restart streams are nested, so more restarts never lose a candidate."""
    return np.random.SeedSequence([int(seed), int(j)])


def better(cand: tuple[float, float], best: tuple[float, float] | None) -> bool:
    """Lower objective wins; ties (within 1e-12) go to the lower distortion."""
    if best is None:
        return True
    if cand[0] < best[0] - 1e-12:
        return True
    return abs(cand[0] - best[0]) <= 1e-12 and cand[1] < best[1]
