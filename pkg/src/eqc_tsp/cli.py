"""Command-line entry point: ``eqc-tsp <command> [flags]``.

Exit codes: 0 on success, 1 on usage errors (bad flags, invalid config), 2 on
runtime errors (bad input files, solver limits). Every command that writes
files also writes ``<first output>.manifest.json`` with the full flag set,
seed, package version, wall times and a sha256 digest of each output.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .instances import Dataset, DatasetFormatError, InstanceError, default_size, generate, load, rescale_to_max_edge, save


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _grid(text: str) -> np.ndarray:
    """``start:stop:step`` (inclusive) or a comma-separated list."""
    from .sigs import make_grid

    try:
        if ":" in text:
            start, stop, step = (float(v) for v in text.split(":"))
            if step <= 0 or stop < start:
                raise ValueError
            return make_grid(start, step, int(round((stop - start) / step)) + 1)
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected start:stop:step or a comma list, got {text!r}") from None


def _sizes(text: str) -> list[int]:
    try:
        if ".." in text:
            lo, hi = (int(v) for v in text.split(".."))
            return list(range(lo, hi + 1))
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo..hi or a comma list, got {text!r}") from None


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _maybe_rescale(ds: Dataset, target: float | None) -> Dataset:
    if target is None:
        return ds
    from dataclasses import replace

    # references no longer match the scaled instances
    return replace(ds, instances=tuple(rescale_to_max_edge(i, target) for i in ds.instances), optimal=None)


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(args, outputs: list[str], timing: dict) -> None:
    outputs = [o for o in outputs if o]
    if not outputs:
        return
    flags = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in vars(args).items() if k != "func"}
    manifest = {
        "command": args.command,
        "flags": flags,
        "seed": flags.get("seed"),
        "version": __version__,
        "wall_time_seconds": timing,
        "outputs": {o: _sha256(o) for o in outputs},
    }
    _write_json(outputs[0] + ".manifest.json", manifest)


def _set_threads(requested: int | None) -> None:
    if requested is None:
        env = os.environ.get("EQC_TSP_THREADS")
        if not env:
            return
        try:
            requested = int(env)
        except ValueError:
            raise UsageError(f"EQC_TSP_THREADS must be an integer, got {env!r}") from None
    if requested < 1:
        raise UsageError("--threads must be at least 1")
    import numba

    numba.set_num_threads(min(requested, numba.config.NUMBA_NUM_THREADS))


# commands -------------------------------------------------------------------

def cmd_gen(args):
    count = args.count if args.count is not None else default_size(args.role, args.size)
    ds = _maybe_rescale(generate(args.size, count, args.seed, role=args.role), args.rescale)
    save(ds, args.out)
    return [args.out], {}


def cmd_solve(args):
    from .solvers import attach_references

    ds = load(args.inp)
    t0 = time.perf_counter()
    ds = attach_references(ds, method=args.method, restarts=args.restarts, seed=args.seed)
    save(ds, args.out)
    return [args.out], {"solve": time.perf_counter() - t0}


def cmd_sigs(args):
    from .analysis import write_gap_csv
    from .sigs import run_sigs

    cfg = args.sigs_config
    res = run_sigs(load(args.val), load(args.test), cfg)
    _write_json(args.out, {"config": vars_of(cfg), **res.to_json()})
    outs = [args.out]
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["gamma", "val_mean_gap", "stage"])
            for g, v in res.per_gamma_gaps.items():
                w.writerow([repr(g), repr(v), "coarse"])
            for g, v in (res.refined_gaps or {}).items():
                w.writerow([repr(g), repr(v), "refine"])
        outs.append(args.csv)
    if args.test_csv:
        write_gap_csv(args.test_csv, res.test)
        outs.append(args.test_csv)
    print(f"gamma*={res.gamma_star} test mean gap={res.test.mean:.6f}")
    return outs, res.timing


def vars_of(cfg):
    from dataclasses import asdict

    return asdict(cfg)


def cmd_rl(args):
    from .rl import train, train_depth_p

    cfg = args.rl_config
    trn, val, test = load(args.train), load(args.val), load(args.test)
    if args.depth == 1 and not args.oracle:
        res = train(trn, val, test, cfg, seed=args.seed)
    else:
        res = train_depth_p(trn, val, test, args.depth, cfg, seed=args.seed)
    _write_json(args.out, {"config": cfg.to_json(), **res.to_json()})
    print(f"episodes={res.episodes_run} params={res.params.tolist()} test mean gap={res.test.mean:.6f}")
    return [args.out], res.timing


def cmd_eval(args):
    from .analysis import evaluate, write_gap_csv
    from .eqc import EqcParams

    ds = load(args.inp)
    rep = evaluate(ds, EqcParams(args.gamma, args.beta))
    _write_json(args.out, {"gamma": args.gamma, "beta": args.beta, **rep.to_json()})
    outs = [args.out]
    if args.csv:
        write_gap_csv(args.csv, rep, [i.id for i in ds.instances])
        outs.append(args.csv)
    print(f"mean={rep.mean:.6f} worst={rep.worst:.6f} best={rep.best:.6f} ({rep.reference_provenance})")
    return outs, {}


def cmd_heatmap(args):
    from .analysis import heatmap, write_heatmap_csv

    m = heatmap(load(args.val), args.gammas, args.betas)
    write_heatmap_csv(args.out, m, args.gammas, args.betas)
    return [args.out], {}


def cmd_pc_rate(args):
    from .analysis import pc_rate_and_margin, write_stability_csv

    ds = _maybe_rescale(load(args.inp), None if args.raw else args.rescale)
    rep = pc_rate_and_margin(ds, args.gammas, args.delta, args.beta)
    write_stability_csv(args.out, rep)
    return [args.out], {}


def cmd_policy_vis(args):
    from .analysis import policy_profile, write_histogram_csv, write_profile_csv
    from .eqc import EqcParams

    ds = _maybe_rescale(load(args.inp), None if args.raw else args.rescale)
    prof = policy_profile(ds, EqcParams(args.gamma, args.beta), args.position)
    write_histogram_csv(args.out, {args.gamma: prof.frequencies()})
    outs = [args.out]
    if args.scatter:
        write_profile_csv(args.scatter, prof)
        outs.append(args.scatter)
    return outs, {}


def cmd_gamma_transfer(args):
    from .analysis import gamma_transfer, write_histogram_csv

    ds = _maybe_rescale(load(args.inp), args.rescale)
    write_histogram_csv(args.out, gamma_transfer(ds, args.gammas, args.beta, args.position))
    return [args.out], {}


def cmd_verify(args):
    from .eqc import EqcParams, zz_expectation
    from .instances import make_rng, random_instance
    from .quantum_oracle import MAX_QUBITS, expectation_zz, simulate_eqc

    if not args.statevector:
        raise UsageError("verify: nothing to check; pass --statevector")
    if max(args.sizes) > MAX_QUBITS or min(args.sizes) < 2:
        raise UsageError(f"verify: sizes must lie in [2, {MAX_QUBITS}]")
    rng = make_rng(args.seed)
    rows = []
    worst = 0.0
    for n in args.sizes:
        dev = 0.0
        for k in range(args.samples):
            inst = random_instance(n, int(rng.integers(2**63)), id=f"verify-{n}-{k}")
            s, t, a = _random_state(rng, n)
            p = EqcParams(float(rng.uniform(0, 2 * math.pi)), float(rng.uniform(0, 2)))
            closed = zz_expectation(inst, s, t, a, p)
            oracle = expectation_zz(simulate_eqc(inst, s, p), t, a)
            dev = max(dev, abs(closed - oracle))
        rows.append({"n": n, "samples": args.samples, "max_deviation": dev})
        worst = max(worst, dev)
        print(f"n={n} samples={args.samples} max|closed-oracle|={dev:.3e}")
    ok = worst < args.tol
    print(("PASS" if ok else "FAIL") + f" max deviation {worst:.3e} (tol {args.tol:g})")
    if args.out:
        _write_json(args.out, {"tol": args.tol, "passed": ok, "max_deviation": worst, "sizes": rows})
    if not ok:
        raise RuntimeError(f"statevector check failed: {worst:.3e} >= {args.tol:g}")
    return [args.out], {}


def _random_state(rng, n):
    """Random reachable state with at least one unexplored node."""
    k = int(rng.integers(1, n))  # visited count, node 0 included
    order = [0] + [int(v) for v in rng.permutation(np.arange(1, n))]
    s = np.full(n, math.pi)
    s[order[:k]] = 0.0
    t = order[k - 1]
    a = int(rng.choice(order[k:]))
    return s, t, a


# parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="eqc-tsp", description="Depth-1 EQC policies for Euclidean TSP.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--threads", type=int, default=None, help="numba thread count (env EQC_TSP_THREADS)")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    g = sub.add_parser("gen", help="generate a dataset")
    g.add_argument("--size", type=int, required=True)
    g.add_argument("--count", type=int, default=None, help="default depends on role and size")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--role", choices=["train", "validation", "test"], default="test")
    g.add_argument("--rescale", type=_positive, default=None, metavar="MAX_EDGE")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="attach reference tours to a dataset")
    s.add_argument("--method", choices=["auto", "brute", "held-karp", "local-search"], default="auto")
    s.add_argument("--restarts", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_solve)

    sg = sub.add_parser("sigs", help="grid search over gamma at fixed beta")
    sg.add_argument("--val", required=True)
    sg.add_argument("--test", required=True)
    sg.add_argument("--beta", type=float, default=1.01)
    sg.add_argument("--grid-start", type=float, default=0.1)
    sg.add_argument("--grid-step", type=float, default=0.1)
    sg.add_argument("--grid-count", type=int, default=16)
    sg.add_argument("--refine", type=float, default=None)
    sg.add_argument("--out", required=True)
    sg.add_argument("--csv", default=None, help="per-gamma validation gaps")
    sg.add_argument("--test-csv", default=None, help="per-instance test gaps")
    sg.set_defaults(func=cmd_sigs)

    r = sub.add_parser("rl", help="Q-learning of the circuit parameters")
    r.add_argument("--config", default=None, help="JSON with RlConfig fields")
    r.add_argument("--train", required=True)
    r.add_argument("--val", required=True)
    r.add_argument("--test", required=True)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--depth", type=int, default=1)
    r.add_argument("--oracle", action="store_true", help="use the statevector oracle even at depth 1")
    r.add_argument("--val-stride", type=int, default=None)
    r.add_argument("--max-episodes", type=int, default=None)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_rl)

    for name in ("eval", "gap"):
        e = sub.add_parser(name, help="gap report of the greedy policy")
        e.add_argument("--in", dest="inp", required=True)
        e.add_argument("--gamma", type=float, required=True)
        e.add_argument("--beta", type=float, default=1.01)
        e.add_argument("--out", required=True)
        e.add_argument("--csv", default=None)
        e.set_defaults(func=cmd_eval)

    h = sub.add_parser("heatmap", help="mean gap over a gamma x beta grid")
    h.add_argument("--val", required=True)
    h.add_argument("--gammas", type=_grid, default=_grid("0.1:1.6:0.1"))
    h.add_argument("--betas", type=_grid, default=_grid("0.1:1.9:0.1"))
    h.add_argument("--out", required=True)
    h.set_defaults(func=cmd_heatmap)

    pc = sub.add_parser("pc-rate", help="policy-critical rate and average margin")
    pc.add_argument("--in", dest="inp", required=True)
    pc.add_argument("--gammas", type=_grid, default=_grid("0.1:6.3:0.1"))
    pc.add_argument("--delta", type=_positive, default=0.01)
    pc.add_argument("--beta", type=float, default=1.1)
    pc.add_argument("--rescale", type=_positive, default=math.sqrt(2), metavar="MAX_EDGE")
    pc.add_argument("--raw", action="store_true", help="skip the default max-edge rescaling")
    pc.add_argument("--out", required=True)
    pc.set_defaults(func=cmd_pc_rate)

    pv = sub.add_parser("policy-vis", help="nearest-neighbor ranks and Q-vs-distance at one position")
    pv.add_argument("--in", dest="inp", required=True)
    pv.add_argument("--gamma", type=float, required=True)
    pv.add_argument("--beta", type=float, default=1.1)
    pv.add_argument("--position", type=int, default=1)
    pv.add_argument("--rescale", type=_positive, default=math.sqrt(2), metavar="MAX_EDGE")
    pv.add_argument("--raw", action="store_true", help="skip the default max-edge rescaling")
    pv.add_argument("--out", required=True, help="rank histogram CSV")
    pv.add_argument("--scatter", default=None, help="Q-vs-distance CSV")
    pv.set_defaults(func=cmd_policy_vis)

    gt = sub.add_parser("gamma-transfer", help="rank histograms of several gammas on one dataset")
    gt.add_argument("--in", dest="inp", required=True)
    gt.add_argument("--gammas", type=_grid, default=_grid("0.9,0.4"))
    gt.add_argument("--beta", type=float, default=1.1)
    gt.add_argument("--position", type=int, default=1)
    gt.add_argument("--rescale", type=_positive, default=None, metavar="MAX_EDGE")
    gt.add_argument("--out", required=True)
    gt.set_defaults(func=cmd_gamma_transfer)

    v = sub.add_parser("verify", help="closed form against the statevector oracle")
    v.add_argument("--statevector", action="store_true")
    v.add_argument("--sizes", type=_sizes, default=_sizes("3..8"))
    v.add_argument("--samples", type=int, default=50)
    v.add_argument("--tol", type=float, default=1e-9)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", default=None)
    v.set_defaults(func=cmd_verify)
    return p


def _finish_args(args) -> None:
    """Validate cross-flag constraints that argparse cannot express."""
    from .rl import RlConfig, RlConfigError
    from .sigs import SigsConfig, SigsConfigError

    if args.command == "sigs":
        try:
            args.sigs_config = SigsConfig(args.beta, args.grid_start, args.grid_step, args.grid_count, args.refine)
        except SigsConfigError as exc:
            raise UsageError(f"sigs: {exc}") from None
    elif args.command == "rl":
        try:
            data = {}
            if args.config:
                with open(args.config, encoding="utf-8") as f:
                    data = json.load(f)
            if args.val_stride is not None:
                data["val_stride"] = args.val_stride
            if args.max_episodes is not None:
                data["max_episodes"] = args.max_episodes
            args.rl_config = RlConfig.from_json(data)
        except (RlConfigError, TypeError, json.JSONDecodeError, OSError) as exc:
            raise UsageError(f"rl: invalid config: {exc}") from None


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _finish_args(args)
        _set_threads(args.threads)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    t0 = time.perf_counter()
    try:
        outputs, timing = args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (InstanceError, DatasetFormatError, ValueError, RuntimeError, OSError) as exc:
        print(f"eqc-tsp {args.command}: error: {exc}", file=sys.stderr)
        return 2
    timing = {"total": time.perf_counter() - t0, **timing}
    # derived config objects are not plain flags
    for k in ("sigs_config", "rl_config"):
        if hasattr(args, k):
            setattr(args, k, vars_of(getattr(args, k)))
    _write_manifest(args, outputs, timing)
    return 0


if __name__ == "__main__":
    sys.exit(main())
