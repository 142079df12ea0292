"""Command-line entry point: ``qbdfactor <command> ...``.

Exit status: 0 success, 2 bad parameters, 3 numerical failure (singular
block / broken invertibility chain), 4 a verification check failed.
Failures also print a one-line JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from . import blockmat as bm
from . import darboux as db
from . import factorization as fz
from . import jacobi as J
from . import spectral as sp
from . import urnsim as us

EXIT_OK, EXIT_PARAM, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4


class VerificationFailed(Exception):
    pass


# --- formatting -----------------------------------------------------------

def fmt(x) -> str:
    """17 significant digits, the format used for every number we print."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _to_json(obj, indent=0) -> str:
    """JSON with floats written at 17 significant digits (non-finite as null)."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_to_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if all(not isinstance(v, (list, tuple, dict, np.ndarray)) for v in obj):
            return "[" + ", ".join(_to_json(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _to_json(v, indent + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj) if math.isfinite(float(obj)) else "null"
    return json.dumps(obj)


def _write_text(path: Optional[str], text: str):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _write_csv(path: Optional[str], header, rows):
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in r])
    _write_text(path, buf.getvalue())


def _blocks_json(seq: bm.BlockSequence, N: int) -> dict:
    return bm.dump_json(seq, N)


# --- shared arguments -----------------------------------------------------

def _add_params(sp_, d=True):
    sp_.add_argument("--alpha", type=float, required=True)
    sp_.add_argument("--beta", type=float, required=True)
    sp_.add_argument("--k", type=float, required=True)
    if d:
        sp_.add_argument("--d", type=int, default=2)


def _add_precision(sp_):
    sp_.add_argument("--precision", choices=("double", "extended"), default="extended",
                     help="arithmetic for the factorization pipeline (default: extended)")


def _params(args, extended=False) -> J.JacobiParams:
    p = J.JacobiParams(args.alpha, args.beta, args.k, getattr(args, "d", 2))
    return p.extended() if extended else p


def _alpha0_file(path, d, dtype):
    with open(path) as fh:
        obj = json.load(fh)
    if isinstance(obj, dict):
        obj = obj["alpha0"]
    a0 = np.array(obj, float)
    if a0.shape != (d, d):
        raise ValueError(f"alpha0 from {path} has shape {a0.shape}, need {(d, d)}")
    return a0.astype(dtype)


def _alpha0(source: str, p: J.JacobiParams):
    if source == "paper":
        return J.alpha0_paper(p)
    kind, _, rest = source.partition(":")
    if kind == "file":
        return _alpha0_file(rest, p.d, p.dtype)
    if kind in ("case1", "case2a", "case2b", "case2c", "case2d"):
        try:
            a, b = (float(v) for v in rest.split(","))
        except ValueError:
            raise ValueError(f"--alpha0 {source!r}: expected {kind}:<x>,<y>") from None
        return np.asarray(J._SEEDS[kind](p, a, b))
    raise ValueError(f"unknown --alpha0 source {source!r}")


def _strategy(kind: str, p: J.JacobiParams, mode: str):
    if kind == "paper":
        return J.paper_tau_strategy(p) if mode == "ul" else J.paper_tau_lu_strategy(p)
    if kind == "triangular":
        return fz.TauStrategy.lower_triangular_Y_upper()
    raise ValueError(f"unknown --tau {kind!r}")


# --- commands -------------------------------------------------------------

def cmd_factorize(args):
    if args.blocks:
        P = bm.load_json(args.blocks)
        if not args.alpha0.startswith("file:") or args.tau != "triangular":
            raise ValueError("--blocks input needs --tau triangular and --alpha0 file:<path>")
        p = None
        a0 = _alpha0_file(args.alpha0[5:], P.d, float) if args.mode == "ul" else None
        strat = fz.TauStrategy.lower_triangular_Y_upper()
    else:
        p = _params(args, args.precision == "extended")
        P = J.transition_sequence(p)
        a0 = _alpha0(args.alpha0, p) if args.mode == "ul" else None
        strat = _strategy(args.tau, p, args.mode)
    N = args.n
    if args.mode == "ul":
        F = fz.factor_ul(P, a0, strat, N=N + 1)
        left, right = F.P_U, F.P_L
        names = ("P_U", "P_L")
    else:
        F = fz.factor_lu(P, strat, N=N + 1)
        left, right = F.P_L, F.P_U
        names = ("P_L", "P_U")
    res = fz.factorization_residual(P, left, right, N + 1)
    rep_l = bm.validate_stochastic(left, N, args.tol)
    rep_r = bm.validate_stochastic(right, N, args.tol)
    out = {
        "mode": args.mode,
        "levels": N,
        "precision": args.precision,
        "residual": res,
        "residual_ok": res <= args.tol,
        "stochastic": {names[0]: rep_l.passed, names[1]: rep_r.passed},
        "min_entry": {names[0]: rep_l.max_negative_entry, names[1]: rep_r.max_negative_entry},
        names[0]: _blocks_json(left, N),
        names[1]: _blocks_json(right, N),
    }
    _write_text(args.out, _to_json(out) + "\n")
    if res > args.tol or (args.require_stochastic and not (rep_l.passed and rep_r.passed)):
        raise VerificationFailed(f"residual {res:.3e} (tol {args.tol:g}); stochastic {rep_l.passed}/{rep_r.passed}")


def cmd_darboux(args):
    p = _params(args, args.precision == "extended")
    P = J.transition_sequence(p)
    N = args.n
    if args.source == "ul":
        F = fz.factor_ul(P, _alpha0(args.alpha0, p), _strategy(args.tau, p, "ul"), N=N + 1)
        T = db.darboux_from_ul(F.P_U, F.P_L, N).transformed
    else:
        F = fz.factor_lu(P, _strategy(args.tau, p, "lu"), N=N + 2)
        T = db.darboux_from_lu(F.P_U, F.P_L, N).transformed
    rep = bm.validate_stochastic(T, N, args.tol)
    out = {"source": args.source, "levels": N, "stochastic": rep.passed,
           "min_entry": rep.max_negative_entry, "max_row_sum_deviation": rep.max_row_sum_deviation,
           "transformed": _blocks_json(T, N)}
    _write_text(args.out, _to_json(out) + "\n")
    if args.require_stochastic and not rep.passed:
        raise VerificationFailed(str(rep))


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tol: float
    note: str = ""


def _run_check(name, tol, fn: Callable[[], float], results: List[CheckResult], note=""):
    try:
        v = float(fn())
        results.append(CheckResult(name, bool(v <= tol), v, tol, note))
    except (bm.BlockError, ValueError, np.linalg.LinAlgError) as exc:
        results.append(CheckResult(name, False, math.nan, tol, f"{type(exc).__name__}: {exc}"))


def verify_all(p: J.JacobiParams, N: int = 20, extended: bool = True) -> List[CheckResult]:
    """Cross-module invariant suite for one parameter set."""
    pe = p.extended() if extended else p
    P = J.transition_sequence(pe)
    Pd = J.transition_sequence(p)
    results: List[CheckResult] = []
    cache = {}

    def ul():
        if "ul" not in cache:
            cache["ul"] = fz.factor_ul(P, J.alpha0_paper(pe), J.paper_tau_strategy(pe), N=N + 1)
        return cache["ul"]

    def lu():
        if "lu" not in cache:
            cache["lu"] = fz.factor_lu(P, J.paper_tau_lu_strategy(pe), N=N + 2)
        return cache["lu"]

    def stoch_gap(*seqs):
        worst = 0.0
        for s in seqs:
            r = bm.validate_stochastic(s, N, 1e-300)
            worst = max(worst, -r.max_negative_entry, r.max_row_sum_deviation)
        return worst

    _run_check("factorization residual", 1e-10,
               lambda: fz.factorization_residual(P, ul().P_U, ul().P_L, N + 1), results)
    _run_check("factor stochasticity", 1e-10, lambda: stoch_gap(ul().P_U, ul().P_L), results)
    _run_check("darboux stochasticity", 1e-10, lambda: stoch_gap(
        db.darboux_from_ul(ul().P_U, ul().P_L, N).transformed,
        db.darboux_from_lu(lu().P_U, lu().P_L, N).transformed), results)

    W = J.weight_spec(p)

    def orthogonality():
        G = sp.gram_blocks(Pd, W, 8)
        H = [float(np.abs(G[n, n]).max()) for n in range(9)]
        return max(float(np.abs(G[n, m]).max()) / min(H[n], H[m])
                   for n in range(9) for m in range(9) if n != m)

    _run_check("orthogonality (relative to norms)", 1e-10, orthogonality, results)

    def kmcg():
        ops = sp.polynomial_sequence(Pd, 3).with_norms(W)
        D = bm.truncate_dense(Pd, 15)
        d = p.d
        worst = 0.0
        for n in range(7):
            Pn = np.linalg.matrix_power(D, n)
            for i in range(4):
                for j in range(4):
                    K = sp.kmcg_entry(Pd, W, n, i, j, ops)
                    worst = max(worst, float(np.abs(K - Pn[i * d:(i + 1) * d, j * d:(j + 1) * d]).max()))
        return worst

    _run_check("karlin-mcgregor vs matrix power", 1e-8, kmcg, results)

    def stationarity():
        pi = sp.invariant_measure(Pd, W, 15)
        row = np.concatenate(pi)
        r = row @ bm.truncate_dense(Pd, 15) - row
        return float(np.abs(r[:9 * p.d]).max())

    _run_check("invariant measure stationarity", 1e-8, stationarity, results)

    def lu_shift():
        q = pe.shift_alpha(1)
        worst = 0.0
        for n in range(N):
            X, Y, R, S = J.paper_factors(q, n)
            Yc, Xc = lu().P_U.blocks(n)
            Sc, Rc = lu().P_L.blocks(n)
            diffs = [X - Xc, Y - Yc, S - Sc] + ([R - Rc] if n else [])
            worst = max(worst, max(float(np.abs(x).max()) for x in diffs))
        return worst

    _run_check("LU alpha-shift identity", 1e-10, lu_shift, results)

    if p.d == 2:
        def ode():
            xs = np.linspace(0.025, 0.975, 20)
            worst = 0.0
            for s11 in (0.25, 0.5):
                for n in range(6):
                    worst = max(worst, J.ode_check(p, s11, n, xs)[0])
            return worst

        _run_check("ODE residual (case 2a, s12 = 1)", 1e-8, ode, results)
    else:
        results.append(CheckResult("ODE residual (case 2a, s12 = 1)", True, math.nan, 1e-8, "n/a for d != 2"))
    return results


def cmd_verify(args):
    p = _params(args)
    t0 = time.perf_counter()
    results = verify_all(p, args.n, args.precision == "extended")
    rows = [(r.name, "PASS" if r.passed else "FAIL", r.value, r.tol, r.note) for r in results]
    if args.out:
        _write_csv(args.out, ("check", "status", "value", "tol", "note"), rows)
    for name, status, value, tol, note in rows:
        extra = f"  ({note})" if note else ""
        print(f"{status}  {name}: {fmt(value)} <= {tol:g}{extra}")
    print(f"# {sum(r.passed for r in results)}/{len(results)} passed in {time.perf_counter() - t0:.2f}s")
    if not all(r.passed for r in results):
        raise VerificationFailed("some checks failed")


_CASES = {"1": "case1", "case1": "case1", "2a": "case2a", "case2a": "case2a", "2b": "case2b",
          "case2b": "case2b", "2c": "case2c", "case2c": "case2c", "2d": "case2d", "case2d": "case2d"}


def cmd_region(args):
    p = _params(args)
    case = _CASES[args.case]
    ranges = None
    if args.range_a or args.range_b:
        dflt = J.DEFAULT_RANGES[case]
        ranges = (tuple(args.range_a or dflt[0]), tuple(args.range_b or dflt[1]))
    scan = J.region_scan(p, case, grid=args.grid, ranges=ranges, n_check=args.n_check)
    _write_csv(args.out, ("s_a", "s_b", "analytic_inside", "stochastic_ok", "M_psd"), scan.rows())
    if args.figure:
        from .plotting import region_figure

        region_figure(scan, p, args.figure)
    if scan.analytic is not None:
        msg = (f"agreement off the boundary: {scan.agreement():.6f} "
               f"({int(scan.exempt().sum())} boundary points exempt)")
        print(msg, file=sys.stderr)


def cmd_kmcg(args):
    p = _params(args)
    P = J.transition_sequence(p)
    W = J.weight_spec(p)
    levels = args.levels
    ops = sp.polynomial_sequence(P, levels).with_norms(W)
    D = bm.truncate_dense(P, args.truncation)
    d = p.d
    rows = []
    worst = 0.0
    for n in range(args.steps + 1):
        Pn = np.linalg.matrix_power(D, n)
        for i in range(levels + 1):
            for j in range(levels + 1):
                K = sp.kmcg_entry(P, W, n, i, j, ops)
                ref = Pn[i * d:(i + 1) * d, j * d:(j + 1) * d]
                for r in range(d):
                    for c in range(d):
                        diff = abs(K[r, c] - ref[r, c])
                        worst = max(worst, diff)
                        rows.append((n, i, j, r, c, K[r, c], ref[r, c], diff))
    _write_csv(args.out, ("n", "i", "j", "row", "col", "kmcg", "matrix_power", "abs_diff"), rows)
    if worst > args.tol:
        raise VerificationFailed(f"max |kmcg - power| = {worst:.3e} > {args.tol:g}")


def cmd_invariant(args):
    p = _params(args)
    P = J.transition_sequence(p)
    W = J.weight_spec(p)
    m = args.levels
    pi = sp.invariant_measure(P, W, m + args.extra)
    row = np.concatenate(pi)
    resid = row @ bm.truncate_dense(P, m + args.extra) - row
    d = p.d
    rows = [(n, i, pi[n][i], resid[n * d + i]) for n in range(m) for i in range(d)]
    _write_csv(args.out, ("level", "phase", "pi", "stationarity_residual"), rows)
    worst = float(np.abs(resid[:m * d]).max())
    if worst > args.tol:
        raise VerificationFailed(f"stationarity residual {worst:.3e} > {args.tol:g}")


def _parse_starts(text: str):
    out = []
    for part in text.split(","):
        lo, _, hi = part.partition("-")
        out.extend(range(int(lo), int(hi or lo) + 1))
    return out


def cmd_urn(args):
    p = _params(args)
    spec = us.UrnChainSpec(p, args.experiment)
    starts = _parse_starts(args.start)
    rows = []
    ok = True
    for s in starts:
        ker = us.empirical_kernel(spec, s, args.trials, args.seed, workers=args.workers)
        rep = us.kernel_vs_matrix(ker, us.reference_row(p, args.experiment, s), args.z)
        rows.extend(rep.rows)
        ok &= rep.passed
    _write_csv(args.out, ("start", "target", "count", "trials", "empirical_p", "reference_p", "z"), rows)
    if args.figure:
        from .plotting import urn_figure

        urn_figure(rows, args.figure, f"{args.experiment}, {args.trials} trials, seed {args.seed}")
    if not ok:
        raise VerificationFailed(f"some |z| > {args.z:g}")


def cmd_weights(args):
    p = _params(args)
    W = J.weight_spec(p)
    if args.transform == "geronimus":
        W = sp.geronimus_transform(W, _alpha0(args.alpha0, p), J.moments_d2(p))
    elif args.transform == "christoffel":
        W = sp.christoffel_transform(W)
    spec = W.to_json()
    spec["transform"] = args.transform
    spec["integral"] = sp.inner_product(np.eye(p.d)[None], np.eye(p.d)[None], W)
    _write_text(args.out, _to_json(spec) + "\n")
    if args.csv or args.figure:
        xs = (np.arange(args.samples) + 0.5) / args.samples
        vals = W(xs)
        if args.csv:
            d = p.d
            _write_csv(args.csv, ("x",) + tuple(f"W{i}{j}" for i in range(d) for j in range(d)),
                       [(x,) + tuple(v.ravel()) for x, v in zip(xs, vals)])
        if args.figure:
            from .plotting import weight_figure

            weight_figure(xs, vals, args.figure, f"{args.transform}: a={W.a:g}, b={W.b:g}")


# --- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qbdfactor", description=__doc__.splitlines()[0],
                                 allow_abbrev=False)
    sub = ap.add_subparsers(dest="command", required=True)

    f = sub.add_parser("factorize", help="UL or LU stochastic factorization", allow_abbrev=False)
    _add_params(f)
    _add_precision(f)
    f.add_argument("--blocks", help="tridiagonal block-sequence JSON instead of the Jacobi example")
    f.add_argument("--mode", choices=("ul", "lu"), default="ul")
    f.add_argument("--alpha0", default="paper",
                   help="paper | case1:s21,s11 | case2a:s11,s12 | case2b/2c/2d:x,y | file:<path>")
    f.add_argument("--tau", choices=("paper", "triangular"), default="paper")
    f.add_argument("--n", type=int, default=20, help="levels to output")
    f.add_argument("--tol", type=float, default=1e-10)
    f.add_argument("--require-stochastic", action="store_true")
    f.add_argument("--out")
    f.set_defaults(func=cmd_factorize)

    g = sub.add_parser("darboux", help="Darboux transform of the Jacobi example", allow_abbrev=False)
    _add_params(g)
    _add_precision(g)
    g.add_argument("--source", choices=("ul", "lu"), default="ul")
    g.add_argument("--alpha0", default="paper")
    g.add_argument("--tau", choices=("paper", "triangular"), default="paper")
    g.add_argument("--n", type=int, default=20)
    g.add_argument("--tol", type=float, default=1e-10)
    g.add_argument("--require-stochastic", action="store_true")
    g.add_argument("--out")
    g.set_defaults(func=cmd_darboux)

    v = sub.add_parser("verify", help="run the cross-module invariant suite", allow_abbrev=False)
    _add_params(v)
    _add_precision(v)
    v.add_argument("--n", type=int, default=20)
    v.add_argument("--out", help="CSV report")
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("region", help="scan alpha_0 parameter regions", allow_abbrev=False)
    _add_params(r, d=False)
    r.add_argument("--case", choices=sorted(_CASES), required=True)
    r.add_argument("--grid", type=int, default=200)
    r.add_argument("--n-check", type=int, default=50)
    r.add_argument("--range-a", type=float, nargs=2, metavar=("LO", "HI"))
    r.add_argument("--range-b", type=float, nargs=2, metavar=("LO", "HI"))
    r.add_argument("--out")
    r.add_argument("--figure", help="PNG/SVG path for the region plot")
    r.set_defaults(func=cmd_region)

    k = sub.add_parser("kmcg", help="Karlin-McGregor blocks vs matrix powers", allow_abbrev=False)
    _add_params(k)
    k.add_argument("--steps", type=int, default=6)
    k.add_argument("--levels", type=int, default=3)
    k.add_argument("--truncation", type=int, default=15)
    k.add_argument("--tol", type=float, default=1e-8)
    k.add_argument("--out")
    k.set_defaults(func=cmd_kmcg)

    i = sub.add_parser("invariant", help="invariant measure from the spectral weight", allow_abbrev=False)
    _add_params(i)
    i.add_argument("--levels", type=int, default=9)
    i.add_argument("--extra", type=int, default=6, help="truncation margin beyond --levels")
    i.add_argument("--tol", type=float, default=1e-8)
    i.add_argument("--out")
    i.set_defaults(func=cmd_invariant)

    u = sub.add_parser("urn", help="simulate the urn experiments", allow_abbrev=False)
    _add_params(u, d=False)
    u.add_argument("--experiment", choices=us.EXPERIMENTS, required=True)
    u.add_argument("--start", default="0", help="state(s), e.g. 0 or 0-8 or 1,3,5")
    u.add_argument("--trials", type=int, default=100000)
    u.add_argument("--seed", type=int, default=7)
    u.add_argument("--workers", type=int, default=1)
    u.add_argument("--z", type=float, default=3.0)
    u.add_argument("--out")
    u.add_argument("--figure")
    u.set_defaults(func=cmd_urn)

    w = sub.add_parser("weights", help="weight matrix and its Geronimus/Christoffel transforms",
                       allow_abbrev=False)
    _add_params(w)
    w.add_argument("--transform", choices=("none", "geronimus", "christoffel"), default="none")
    w.add_argument("--alpha0", default="paper")
    w.add_argument("--samples", type=int, default=200)
    w.add_argument("--csv")
    w.add_argument("--figure")
    w.add_argument("--out")
    w.set_defaults(func=cmd_weights)
    return ap


def _error_record(kind, exc, code):
    rec = {"error": kind, "message": str(exc).splitlines()[0] if str(exc) else type(exc).__name__,
           "exit": code}
    for attr in ("level", "what", "rcond"):
        val = getattr(exc, attr, None)
        if val not in (None, ""):
            rec[attr] = val
    print(json.dumps(rec, default=float), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for knob in ("n", "grid", "n_check", "trials", "steps", "levels", "truncation", "samples"):
        val = getattr(args, knob, None)
        if val is not None and val < 1:
            return _error_record("parameter", ValueError(f"--{knob.replace('_', '-')} must be >= 1"),
                                 EXIT_PARAM)
    try:
        args.func(args)
    except VerificationFailed as exc:
        return _error_record("verification", exc, EXIT_VERIFY)
    except (bm.SingularBlockError, bm.BlockGenerationError, sp.QuadratureError,
            np.linalg.LinAlgError) as exc:
        return _error_record("numerical", exc, EXIT_NUMERIC)
    except (ValueError, OSError, KeyError) as exc:
        return _error_record("parameter", exc, EXIT_PARAM)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
