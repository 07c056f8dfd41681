"""Command-line entry point: ``losscodes <command> ...``."""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis as an
from . import io
from .baselines import fixtures, five_qubit_code_entropy
from .dicke import ChoiMap, SymmetricState, evaluate, loss_tensor
from .pipeline import PipelineConfig, run, run_multi_r
from .subproblems import ProtocolResult

log = logging.getLogger("losscodes")


class _Fail(Exception):
    pass


def _outdir(args):
    return Path(args.outdir) if args.outdir else io.default_outdir()


def _distances(args):
    n = int(round((args.Lmax - args.Lmin) / args.Lstep)) + 1
    return [round(args.Lmin + k * args.Lstep, 10) for k in range(n)]


def _emit(rows, path, fmt):
    text = "".join(fmt(row) + "\n" for row in rows)
    if path is None:
        sys.stdout.write(text)
    else:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        print(f"wrote {path}")


def _load_protocols(dirs):
    """Every <p>.state / <p>.map pair below the given directories."""
    out = []
    for d in dirs or []:
        for st in sorted(Path(d).rglob("*.state")):
            mp = st.with_suffix(".map")
            if not mp.exists():
                continue
            state, choi = io.read_protocol(st), io.read_protocol(mp)
            o = evaluate(state, choi, loss_tensor(state.d, state.s, choi.r))
            out.append(ProtocolResult(state.d, state.s, choi.r, round(o.probability, 10), o.fidelity, state, choi, str(st)))
    return out


def _save_protocols(store, folder):
    folder.mkdir(parents=True, exist_ok=True)
    for p, res in sorted(store.best.items()):
        if isinstance(res, ProtocolResult):
            io.write_protocol(folder / f"{p:.2f}.state", res.state)
            io.write_protocol(folder / f"{p:.2f}.map", res.map)


# -- commands ------------------------------------------------------------------


def cmd_optimize(args):
    cfg = PipelineConfig(
        args.d, args.s, args.r, pmin=args.pmin, pmax=args.pmax, outermap=args.outermap, erasure=args.erasure,
        workers=args.workers, seed=args.seed, n_restarts=args.restarts,
    )

    def progress(p, res):
        log.info("p=%.2f F=%s", p, "failed" if res is None else f"{res.fidelity:.6f}")

    store = run(cfg, progress)
    if not store.best:
        raise _Fail("optimization failed at every grid point")
    out = _outdir(args)
    path = io.write_table(out / io.table_name(args.d, args.s, args.r), store.table())
    print(f"wrote {path}")
    if args.save_protocols:
        _save_protocols(store, out / f"{args.d}-{args.s}-{args.r}")
    for p, err in sorted(store.failures.items()):
        print(f"p={p:.2f}: {err}", file=sys.stderr)
    return 0


def cmd_all_r(args):
    alpha = an.parse_alpha(args.alpha)
    p_trans = args.ptrans if args.ptrans is not None else an.transmission(alpha, args.L)
    grid = np.arange(int(round(args.pmin * 100)), int(round(args.pmax * 100)) + 1) / 100
    store = run_multi_r(args.d, args.s, p_trans, grid, args.floor, seed=args.seed, n_restarts=args.restarts)
    if not store.best:
        raise _Fail("no total success probability was reachable")
    path = io.write_table(_outdir(args) / f"{args.d}-{args.s}-all.dat", store.table())
    print(f"wrote {path}")
    return 0


def _analyze_rpe(args):
    scan = an.rpe_scan(args.ptrans, args.threshold, range(1, args.nmax + 1), args.mmax)
    _emit(sorted(scan.items()), args.output, lambda r: f"{r[0]} {r[1]}")
    adv = an.rpe_advantage(args.ptrans, args.mmax, args.nmax)
    msg = "none" if adv is None else f"m={adv[0]} n={adv[1]} p={adv[2]:.6f}"
    print(f"# advantage over direct transmission: {msg}", file=sys.stderr)


def _analyze_keyrate(args):
    alpha = an.parse_alpha(args.alpha)
    chans = [an.ChannelModel(alpha, L) for L in _distances(args)]
    protos = [] if args.direct else _load_protocols(args.protocols)
    if not args.direct and not protos:
        raise _Fail("no protocols found; pass --protocols DIR or --direct")
    rows = [(ch.L, ch.p_trans) for ch in chans] if args.direct else an.key_rate_table(protos, chans)
    _emit(rows, args.output, lambda r: f"{r[0]:.2f} {r[1]:.6f}")


def _analyze_entropy(args):
    alpha = an.parse_alpha(args.alpha)
    rows = []
    for L in _distances(args):
        ch = an.ChannelModel(alpha, L)
        row = [L, an.direct_entropy(ch)]
        if args.five_qubit:
            row += [five_qubit_code_entropy(ch, "full"), five_qubit_code_entropy(ch, "reduced")]
        rows.append(row)
    _emit(rows, args.output, lambda r: " ".join([f"{r[0]:.2f}"] + [f"{v:.6f}" for v in r[1:]]))


def _analyze_yield(args):
    alpha = an.parse_alpha(args.alpha)
    protos = _load_protocols(args.protocols)
    chans = [an.ChannelModel(alpha, L) for L in _distances(args)]
    rows = an.inverse_yield(protos, chans)
    _emit(rows, args.output, lambda r: f"{r.L:.2f} {r.per_packet:.6f} {r.per_photon:.6f}")


def _analyze_swap(args):
    if args.werner is not None:
        rho = an.werner_state(args.werner)
    elif args.state and args.map:
        state, choi = io.read_protocol(args.state), io.read_protocol(args.map)
        rho = evaluate(state, choi, loss_tensor(state.d, state.s, choi.r)).normalized
    else:
        raise _Fail("pass --werner F or both --state and --map")
    res = an.optimal_swap(rho, args.mode)
    ox, oz = an.bell_projection_swap(rho)
    print(f"e_X {res.e_X:.6f}\ne_Z {res.e_Z:.6f}\nbell_e_X {ox:.6f}\nbell_e_Z {oz:.6f}")


def _analyze_distance(args):
    alpha = an.parse_alpha(args.alpha)
    if args.L is not None:
        protos = _load_protocols(args.protocols)
        if not protos:
            raise _Fail("no protocols found; pass --protocols DIR")
        ch = an.ChannelModel(alpha, args.L)
        rows = an.best_fidelity_by_total(protos, ch)
        path = _outdir(args) / f"bestdist{args.L:g}.dat"
        _emit(rows, path, lambda r: f"{r[0]:.2f} {r[1]:.6f}")
        return
    print(f"direct {an.critical_distance(an.direct_entropy, alpha):.4f}")
    if args.five_qubit:
        for mode in ("full", "reduced"):
            L = an.critical_distance(lambda ch, m=mode: five_qubit_code_entropy(ch, m), alpha, hi=60.0, tol=1e-3)
            print(f"five-qubit-{mode} {L:.4f}")


_ANALYZERS = {
    "rpe": _analyze_rpe,
    "keyrate": _analyze_keyrate,
    "entropy": _analyze_entropy,
    "yield": _analyze_yield,
    "swap": _analyze_swap,
    "distance": _analyze_distance,
}


def cmd_analyze(args):
    _ANALYZERS[args.what](args)
    return 0


def cmd_verify(args):
    bad = 0
    for fx in fixtures():
        p, F = fx.evaluate()
        ok = abs(F - fx.expected_fidelity) <= fx.tolerance and abs(p - fx.p_dist) <= 1e-9
        ok = ok and fx.state.is_valid() and fx.map.is_valid()
        bad += not ok
        print(f"{'ok  ' if ok else 'FAIL'} {fx.name:24s} p={p:.9f} F={F:.9f} expected {fx.expected_fidelity:.9f}")
    return 1 if bad else 0


def cmd_eval(args):
    state, choi = io.read_protocol(args.state_file), io.read_protocol(args.map_file)
    if not isinstance(state, SymmetricState) or not isinstance(choi, ChoiMap):
        raise _Fail("expected a state file then a map file")
    if state.d != choi.d or choi.r > state.s:
        raise _Fail(f"incompatible protocol: state d={state.d} s={state.s}, map d={choi.d} r={choi.r}")
    out = evaluate(state, choi, loss_tensor(state.d, state.s, choi.r))
    print(f"p_dist {out.probability:.9f}\nfidelity {out.fidelity:.9f}")
    if not (state.is_valid() and choi.is_valid()):
        print("warning: state or map violates its constraints", file=sys.stderr)
    return 0


# -- parser --------------------------------------------------------------------


def _add_distance_args(p):
    p.add_argument("--alpha", default="0.046", help="attenuation per km, or dB/km with a 'dB' suffix")
    p.add_argument("--Lmin", type=float, default=0.0)
    p.add_argument("--Lmax", type=float, default=100.0)
    p.add_argument("--Lstep", type=float, default=1.0)


def build_parser():
    ap = argparse.ArgumentParser(prog="losscodes", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="optimize one (d, s, r) over a probability grid")
    for name in ("d", "s", "r"):
        p.add_argument(name, type=int)
    p.add_argument("--outermap", action="store_true", help="also run the outer search over maps")
    p.add_argument("--erasure", action="store_true", help="full-erasure mode (d = 2, small s)")
    p.add_argument("--pmin", type=float, default=0.01)
    p.add_argument("--pmax", type=float, default=1.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=2)
    p.add_argument("--outdir")
    p.add_argument("--save-protocols", action="store_true", help="write <p>.state/<p>.map files next to the table")
    p.set_defaults(fn=cmd_optimize)

    p = sub.add_parser("all-r", help="one map per arrival count at a fixed transmission")
    p.add_argument("d", type=int)
    p.add_argument("s", type=int)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--ptrans", type=float)
    g.add_argument("--L", type=float)
    p.add_argument("--alpha", default="0.046")
    p.add_argument("--pmin", type=float, default=0.01)
    p.add_argument("--pmax", type=float, default=1.0)
    p.add_argument("--floor", type=float, default=1e-3, help="drop arrival counts below this relative weight")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=2)
    p.add_argument("--outdir")
    p.set_defaults(fn=cmd_all_r)

    p = sub.add_parser("analyze", help="downstream tables")
    asub = p.add_subparsers(dest="what", required=True)
    q = asub.add_parser("rpe")
    q.add_argument("--ptrans", type=float, default=0.82)
    q.add_argument("--threshold", type=float, default=1e-3)
    q.add_argument("--mmax", type=int, default=200)
    q.add_argument("--nmax", type=int, default=200)
    q.add_argument("--output")
    q = asub.add_parser("keyrate")
    _add_distance_args(q)
    q.add_argument("--direct", action="store_true")
    q.add_argument("--protocols", nargs="*")
    q.add_argument("--output")
    q = asub.add_parser("entropy")
    _add_distance_args(q)
    q.add_argument("--five-qubit", action="store_true")
    q.add_argument("--output")
    q = asub.add_parser("yield")
    _add_distance_args(q)
    q.add_argument("--protocols", nargs="*")
    q.add_argument("--output")
    q = asub.add_parser("swap")
    q.add_argument("--werner", type=float)
    q.add_argument("--state")
    q.add_argument("--map")
    q.add_argument("--mode", choices=("separate", "minimax"), default="separate")
    q = asub.add_parser("distance")
    q.add_argument("--alpha", default="0.046")
    q.add_argument("--L", type=float, help="write bestdist<L>.dat instead of critical distances")
    q.add_argument("--protocols", nargs="*")
    q.add_argument("--five-qubit", action="store_true")
    q.add_argument("--outdir")
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("verify", help="check every closed-form fixture")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("eval", help="evaluate a protocol from state and map files")
    p.add_argument("state_file")
    p.add_argument("map_file")
    p.set_defaults(fn=cmd_eval)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.fn(args)
    except (_Fail, ValueError, TypeError, FileNotFoundError) as exc:
        print(f"losscodes {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
