"""Command line driver: ``qsrd <command> ...``.

Exit codes: 0 success, 1 invalid input, 2 a verifier step failed.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
import time

import numpy as np

from . import k_solver, verifier
from .channels import random_block_code
from .distortion import qsr_observable
from .entropics import evaluate_expression
from .instances import InstanceError, ResultFile, load_instance
from .optimize import FEASTOL
from .rd_solver import DEFAULT_RESTARTS, estimate_D0, sweep_curve
from .reports import ChainReport
from .tensor_core import SystemLayout, random_pure_state

CSV_HEADER = ("D", "rate_bits", "feasible", "z_cap", "restarts", "seed")
SUITES = ("background", "converse", "decoupling", "generic", "appendixA")


class UsageError(ValueError):
    pass


def _grid(text: str | None, inst) -> list[float]:
    if text is not None:
        try:
            return [float(t) for t in text.split(",") if t.strip()]
        except ValueError:
            raise UsageError(f"--d-grid must be comma-separated numbers, got {text!r}") from None
    return list(inst.optimizer.get("d_grid", [0.0]))


def _opt(args, inst, key, default):
    v = getattr(args, key, None)
    if v is not None:
        return v
    if inst is not None and key in inst.optimizer:
        return inst.optimizer[key]
    return default


def curve_csv(curve, restarts: int, seed: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for p in curve.points:
        w.writerow([repr(float(p.D_target)), repr(float(p.rate_bound)), str(bool(p.feasible)).lower(), p.z_cap,
                    restarts, seed])
    return buf.getvalue()


def _finish(args, result: ResultFile, started: float):
    if args.record_time:
        result.wall_time_s = round(time.perf_counter() - started, 3)
    if args.out:
        result.write(args.out)


# ---------------------------------------------------------------------------
# commands


def cmd_rd_curve(args) -> int:
    t0 = time.perf_counter()
    inst = load_instance(args.instance)
    restarts = _opt(args, inst, "restarts", DEFAULT_RESTARTS)
    seed = _opt(args, inst, "seed", 0)
    feastol = _opt(args, inst, "feastol", FEASTOL)
    rd = inst.rd_instance(args.z_cap)
    curve = sweep_curve(rd, _grid(args.d_grid, inst), restarts, seed, feastol)
    curve.check_invariants()
    text = curve_csv(curve, restarts, seed)
    sys.stdout.write(text)
    if args.csv:
        with open(args.csv, "w", newline="") as f:
            f.write(text)
    flags = {"restarts": restarts, "feastol": feastol, "d_grid": _grid(args.d_grid, inst)}
    _finish(args, ResultFile("rd-curve", seed, rd.caps, {"curve": curve.to_record()}, flags), t0)
    return 0


def cmd_kfun(args) -> int:
    t0 = time.perf_counter()
    inst = load_instance(args.instance)
    restarts = _opt(args, inst, "restarts", DEFAULT_RESTARTS)
    seed = _opt(args, inst, "seed", 0)
    feastol = _opt(args, inst, "feastol", FEASTOL)
    ens = inst.ensemble()
    kinst = inst.k_instance(args.z_cap)
    grid = _grid(args.d_grid, inst)
    points = [k_solver.estimate_K(kinst, d, restarts, seed, feastol) for d in grid]
    red = k_solver.reducibility_decompose(ens, args.tol)
    gen = k_solver.genericity_check(ens)
    payload = {
        "points": [p.to_record() for p in points],
        "reducibility": {"components": [list(c) for c in red.components], "y_labels": list(red.y_labels),
                         "irreducible": red.irreducible, "stable": red.stable, "tol": red.tol,
                         "max_cross_overlap": red.max_cross_overlap},
        "genericity": {"generic": gen.generic, "witness_x": gen.witness_x, "lambda0": gen.lambda0},
    }
    if args.kbar:
        kbar = k_solver.kbar_zero_grid(kinst, k_solver.KBAR_GRID, restarts, seed)
        payload["kbar_grid"] = [p.to_record() for p in kbar]
        q0 = k_solver.q0_lower_bound(kinst, kbar[-1].k_bound)
        payload["q0_lower_bound"] = {"bits": q0.bits, "tight": q0.tight, "k_bar_zero_used": kbar[-1].k_bound}
    if ens.dim("C") == 1 and ens.dim("B") == 1:
        payload["modified_schumacher_rate"] = k_solver.modified_schumacher_rate(ens, args.tol)
    print("D,k_bound,k_raw,fidelity,feasible")
    for p in points:
        print(f"{p.D!r},{p.k_bound!r},{p.k_raw!r},{p.fidelity_achieved!r},{str(p.feasible).lower()}")
    flags = {"restarts": restarts, "feastol": feastol, "d_grid": grid, "tol": args.tol}
    _finish(args, ResultFile("kfun", seed, kinst.dims, payload, flags), t0)
    return 0


def _suite(name: str, trials: int, seed: int) -> list[ChainReport]:
    rng = np.random.default_rng(seed)
    out = []
    if name == "background":
        out.append(verifier.verify_background(seed, trials))
    elif name == "converse":
        lay = SystemLayout.of(("A", 2), ("B", 2), ("R", 2))
        for t in range(trials):
            psi = random_pure_state(lay, rng.integers(0, 2 ** 63 - 1))
            block = random_block_code(psi, 2, rng.integers(0, 2 ** 63 - 1))
            out.append(verifier.verify_converse_chain(block, psi, qsr_observable(psi)))
    elif name in ("decoupling", "appendixA", "generic"):
        for t in range(trials):
            ens = k_solver.random_ensemble(rng.integers(0, 2 ** 63 - 1), 2, {"A": 2, "R": 2})
            inst = k_solver.KInstance(ens)
            U, Ut = k_solver.perturbed_pair(inst, rng.integers(0, 2 ** 63 - 1), 0.01)
            if name == "decoupling":
                out.append(k_solver.decoupling_check(inst, U, Ut, 0.01).to_chain(f"decoupling[{t}]"))
            elif name == "appendixA":
                out.append(verifier.verify_appendixA_chain(inst, U, Ut, 0.01))
            else:
                c = k_solver.composite_check(inst, U, Ut, 0.01)
                r = ChainReport(f"generic[{t}]", metadata={"lambda0": c.lambda0})
                r.add("sum p ||tau_x - psi_x (x) tau_0||_1 <= 2(sqrt(6D)+sqrt(2D))/sqrt(lambda0)", c.lhs, c.bound,
                      "<=")
                out.append(r)
    else:
        raise UsageError(f"unknown suite {name!r}; choose from {SUITES}")
    return out


def cmd_verify(args) -> int:
    t0 = time.perf_counter()
    seed = args.seed if args.seed is not None else 0
    trials = args.trials
    reports = _suite(args.suite, trials, seed)
    ok = all(r.all_ok for r in reports)
    bad = sum(len(r.failures()) for r in reports)
    print(f"{args.suite}: {len(reports)} report(s), {bad} failed step(s) -> {'PASS' if ok else 'FAIL'}")
    for r in reports:
        for s in r.failures():
            print(f"  {r.chain_id}: {s.label}: lhs={s.lhs!r} rhs={s.rhs!r} slack={s.slack!r}")
    payload = {"reports": [r.to_record() for r in reports], "all_ok": ok}
    _finish(args, ResultFile("verify", seed, {}, payload, {"suite": args.suite, "trials": trials}), t0)
    return 0 if ok else 2


def cmd_entropy(args) -> int:
    inst = load_instance(args.instance)
    rep = evaluate_expression(inst.source_state(), args.expression, args.instance)
    print(repr(rep.value))
    return 0


def cmd_d0(args) -> int:
    t0 = time.perf_counter()
    inst = load_instance(args.instance)
    restarts = _opt(args, inst, "restarts", 8)
    seed = _opt(args, inst, "seed", 0)
    rd = inst.rd_instance(args.z_cap)
    d0 = estimate_D0(rd, restarts, seed)
    print(repr(d0))
    _finish(args, ResultFile("d0", seed, rd.caps, {"d0_estimate": d0}, {"restarts": restarts}), t0)
    return 0


def cmd_tx(args) -> int:
    t0 = time.perf_counter()
    inst = load_instance(args.instance)
    ens = inst.ensemble()
    gen = k_solver.genericity_check(ens)
    x0 = args.x0 if args.x0 is not None else gen.witness_x
    if x0 is None:
        raise UsageError("source is not generic; pass --x0 to choose the reference signal")
    lam0 = float(np.linalg.eigvalsh(ens.signal(x0).reduced([n for n in ens.layout.names if n != "R"]))[0])
    rows = []
    print("x,norm,norm_bound,residual")
    for x in range(ens.size):
        T = k_solver.tx_operator(ens.signal(x0), ens.signal(x))
        v = k_solver.apply_tx(T, ens.signal(x0))
        resid = float(np.sqrt(max(0.0, 1 - abs(np.vdot(v, ens.states[x])) ** 2 / max(np.vdot(v, v).real, 1e-300))))
        norm = float(np.linalg.norm(T.matrix, 2))
        bound = float(1 / np.sqrt(lam0)) if lam0 > 0 else float("inf")
        rows.append({"x": x, "norm": norm, "norm_bound": bound, "residual": resid,
                     "matrix": [[[z.real, z.imag] for z in row] for row in T.matrix]})
        print(f"{x},{norm!r},{bound!r},{resid!r}")
    _finish(args, ResultFile("tx", 0, {}, {"x0": x0, "lambda0": lam0, "operators": rows}, {}), t0)
    return 0


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1 so that 2 stays reserved for verifier failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qsrd", description="Entanglement-assisted quantum rate-distortion workbench")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, instance=True):
        if instance:
            sp.add_argument("instance", help="instance file (YAML)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="write a JSON result file here")
        sp.add_argument("--record-time", action="store_true", help="include wall time in the result file")

    def solver(sp):
        sp.add_argument("--restarts", type=int)
        sp.add_argument("--z-cap", type=int, dest="z_cap")
        sp.add_argument("--feastol", type=float)
        sp.add_argument("--d-grid", dest="d_grid", help="comma-separated distortion targets")

    sp = sub.add_parser("rd-curve", help="sweep Q'(D) upper bounds over a distortion grid (CSV on stdout)")
    common(sp)
    solver(sp)
    sp.add_argument("--csv", help="also write the CSV here")
    sp.set_defaults(func=cmd_rd_curve)

    sp = sub.add_parser("kfun", help="estimate K(D) and analyze an ensemble source")
    common(sp)
    solver(sp)
    sp.add_argument("--tol", type=float, default=k_solver.REDUCIBILITY_TOL, help="orthogonality tolerance")
    sp.add_argument("--kbar", action="store_true", help="also run the decreasing-D grid for K at zero")
    sp.set_defaults(func=cmd_kfun)

    sp = sub.add_parser("verify", help="run a verifier suite")
    sp.add_argument("suite", choices=SUITES)
    sp.add_argument("--trials", type=int, default=100)
    common(sp, instance=False)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("entropy", help="evaluate an entropic expression such as 'I(A:R|B)'")
    sp.add_argument("instance")
    sp.add_argument("expression")
    sp.set_defaults(func=cmd_entropy)

    sp = sub.add_parser("d0", help="estimate the minimum achievable distortion")
    common(sp)
    solver(sp)
    sp.set_defaults(func=cmd_d0)

    sp = sub.add_parser("tx", help="reference-side operators mapping one signal onto the others")
    common(sp)
    sp.add_argument("--x0", type=int, help="reference signal (default: the genericity witness)")
    sp.set_defaults(func=cmd_tx)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InstanceError, UsageError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
