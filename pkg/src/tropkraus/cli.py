"""Command line front end: `tropkraus {jsr, hjb, bench, check}`.

jsr    certified upper bound on the joint spectral radius of a family
hjb    piecewise quadratic value approximation for a switched LQ problem
bench  seeded random-family benchmark sweep, CSV output
check  independent re-verification of a certificate file

Reports are single JSON objects; re-running with identical inputs, flags
and seed reproduces every numeric field bit for bit (only the wall-clock
field varies).  Matrices in all file formats are row-major nested arrays
of decimal floats.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .automaton import (
    MatrixFamily,
    automaton_to_json,
    de_bruijn,
    family_from_json,
    family_hash,
)
from .errors import (
    DivergenceError,
    DomainError,
    InstanceError,
    NumericFailure,
    ResourceLimitError,
    RiccatiEscapeError,
    UsageError,
)
from .kraus import (
    Certificate,
    certificate_from_json,
    certificate_to_json,
    km_iterate,
    verify_certificate,
)
from .loewner import DET, TRACE
from .riccati import (
    ValueApprox,
    backsub_error,
    hjb_fixed_point,
    lq_from_json,
    lq_hash,
    value_to_json,
)

_SELECTIONS = {"trace": TRACE, "det": DET}


def _load_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise UsageError(
            f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: "
            f"{exc.msg}"
        ) from exc
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _automaton_descriptor(order, aut):
    return {"kind": "de_bruijn", "order": order, "p": aut.p}


def cmd_jsr(args):
    fam = family_from_json(_load_json(args.input))
    aut = de_bruijn(fam.m, args.order)
    sel = _SELECTIONS[args.selection]
    t0 = time.perf_counter()
    result = km_iterate(
        fam, aut, sel=sel, eps=args.eps, tol=args.tol, max_iter=args.max_iter
    )
    wall_ms = 1000.0 * (time.perf_counter() - t0)
    fhash = family_hash(fam)
    report = {
        "command": "jsr",
        "version": __version__,
        "instance": {
            "family_hash": fhash,
            "n": fam.n,
            "m": fam.m,
            "automaton": _automaton_descriptor(args.order, aut),
        },
        "params": {
            "order": args.order,
            "selection": args.selection,
            "eps": args.eps,
            "tol": args.tol,
            "max_iter": args.max_iter,
        },
        "results": {
            "rho_cert": result.rho_cert,
            "lambda": result.eigenvalue,
            "iterations": result.iterations,
            "converged": result.converged,
            "residual": result.residual,
            "wall_clock_ms": wall_ms,
        },
    }
    if args.out:
        _write_json(args.out, report)
    if args.certificate:
        cert = Certificate(
            rho=result.rho_cert,
            automaton=aut,
            state=result.state,
            epsilon=result.epsilon,
            family_hash=fhash,
        )
        _write_json(args.certificate, certificate_to_json(cert))
    print(f"rho_cert {result.rho_cert!r}")
    print(f"lambda {result.eigenvalue!r}")
    print(f"iterations {result.iterations}")
    print(f"converged {str(result.converged).lower()}")
    return 0 if result.converged else 2


def cmd_hjb(args):
    prob = lq_from_json(_load_json(args.input))
    aut = de_bruijn(prob.m, args.order)
    sel = _SELECTIONS[args.selection]
    x0 = np.broadcast_to(
        args.init_scale * np.eye(prob.n), (aut.p, prob.n, prob.n)
    ).copy()
    initial_error = backsub_error(
        ValueApprox(state=x0, tau=args.tau, automaton=aut), prob, args.samples
    )
    t0 = time.perf_counter()
    res = hjb_fixed_point(
        prob,
        aut,
        sel=sel,
        tau=args.tau,
        x0=x0,
        tol=args.tol,
        max_iter=args.max_iter,
    )
    wall_ms = 1000.0 * (time.perf_counter() - t0)
    final_error = backsub_error(res.value, prob, args.samples)
    report = {
        "command": "hjb",
        "version": __version__,
        "instance": {
            "problem_hash": lq_hash(prob),
            "n": prob.n,
            "m": prob.m,
            "automaton": _automaton_descriptor(args.order, aut),
        },
        "params": {
            "order": args.order,
            "tau": args.tau,
            "selection": args.selection,
            "init_scale": args.init_scale,
            "samples": args.samples,
            "tol": args.tol,
            "max_iter": args.max_iter,
        },
        "results": {
            "initial_error": initial_error,
            "final_error": final_error,
            "iterations": res.iterations,
            "converged": res.converged,
            "residual": res.residual,
            "wall_clock_ms": wall_ms,
        },
    }
    if args.out:
        _write_json(args.out, report)
    if args.value_out:
        _write_json(args.value_out, value_to_json(res.value, prob))
    print(f"initial_error {initial_error!r}")
    print(f"final_error {final_error!r}")
    print(f"iterations {res.iterations}")
    print(f"cpu_time_s {wall_ms / 1000.0:.3f}")
    return 0 if res.converged else 2


def _bench_instance(n, idx, args):
    gen = np.random.default_rng([args.seed, n, idx])
    fam = MatrixFamily(matrices=tuple(gen.standard_normal((2, n, n))))
    aut = de_bruijn(fam.m, args.order)
    t0 = time.perf_counter()
    result = km_iterate(
        fam, aut, sel=TRACE, eps=args.eps, tol=args.tol, max_iter=args.max_iter
    )
    cpu_ms = 1000.0 * (time.perf_counter() - t0)
    if args.certificate_dir:
        cert = Certificate(
            rho=result.rho_cert,
            automaton=aut,
            state=result.state,
            epsilon=result.epsilon,
            family_hash=family_hash(fam),
        )
        path = os.path.join(args.certificate_dir, f"cert_n{n}_i{idx}.json")
        _write_json(path, certificate_to_json(cert))
    return {
        "cpu_ms": cpu_ms,
        "rho_cert": result.rho_cert,
        "iterations": result.iterations,
    }


def _worker_threads():
    env = os.environ.get("TK_THREADS", "")
    if env.strip():
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise UsageError(f"TK_THREADS must be an integer, got {env!r}") from exc
    return max(1, os.cpu_count() or 1)


def cmd_bench(args):
    if not args.dims:
        raise UsageError("--dims needs at least one dimension")
    if args.count < 1:
        raise UsageError(f"--count must be >= 1, got {args.count}")
    if args.certificate_dir:
        os.makedirs(args.certificate_dir, exist_ok=True)
    rows = []
    with ThreadPoolExecutor(max_workers=_worker_threads()) as pool:
        for n in args.dims:
            futures = [
                pool.submit(_bench_instance, n, idx, args)
                for idx in range(args.count)
            ]
            try:
                runs = [f.result() for f in futures]
            except ResourceLimitError as exc:
                print(f"n={n}: skipped ({exc})", file=sys.stderr)
                rows.append((n, "", "", "", "skipped"))
                continue
            rows.append(
                (
                    n,
                    repr(sum(r["cpu_ms"] for r in runs) / len(runs)),
                    repr(sum(r["rho_cert"] for r in runs) / len(runs)),
                    repr(sum(r["iterations"] for r in runs) / len(runs)),
                    "ok",
                )
            )
    lines = ["n,mean_cpu_ms,mean_rho_cert,mean_iterations,status"]
    lines += [",".join(str(c) for c in row) for row in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_check(args):
    cert = certificate_from_json(_load_json(args.certificate))
    fam = family_from_json(_load_json(args.input))
    expected = family_hash(fam)
    if cert.family_hash != expected:
        print(
            f"family hash mismatch: certificate carries {cert.family_hash}, "
            f"family hashes to {expected}",
            file=sys.stderr,
        )
        return 1
    valid, worst = verify_certificate(
        cert.state, cert.rho, fam, cert.automaton, tol=args.tol
    )
    print(f"worst_edge_margin {worst!r}")
    print(f"valid {str(valid).lower()}")
    return 0 if valid else 2


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="tropkraus",
        description="Joint-spectral-radius certificates and switched-LQ value "
        "functions via Loewner-order fixed points",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    jsr = sub.add_parser("jsr", help="certified joint-spectral-radius bound")
    jsr.add_argument("--input", required=True, help="matrix family JSON")
    jsr.add_argument("--order", type=int, default=6, help="De Bruijn order d")
    jsr.add_argument("--selection", choices=sorted(_SELECTIONS), default="trace")
    jsr.add_argument("--eps", type=float, default=1e-3)
    jsr.add_argument("--tol", type=float, default=1e-9)
    jsr.add_argument("--max-iter", type=int, default=10000)
    jsr.add_argument("--out", help="write the run report JSON here")
    jsr.add_argument("--certificate", help="write the certificate JSON here")
    jsr.set_defaults(func=cmd_jsr)

    hjb = sub.add_parser("hjb", help="switched-LQ value function approximation")
    hjb.add_argument("--input", required=True, help="LQ problem JSON")
    hjb.add_argument("--order", type=int, default=2, help="De Bruijn order d")
    hjb.add_argument("--tau", type=float, default=0.1)
    hjb.add_argument("--selection", choices=sorted(_SELECTIONS), default="det")
    hjb.add_argument("--init-scale", type=float, default=0.1)
    hjb.add_argument("--samples", type=int, default=720)
    hjb.add_argument("--tol", type=float, default=1e-9)
    hjb.add_argument("--max-iter", type=int, default=10000)
    hjb.add_argument("--out", help="write the run report JSON here")
    hjb.add_argument("--value-out", help="write the value approximation here")
    hjb.set_defaults(func=cmd_hjb)

    bench = sub.add_parser("bench", help="random-family benchmark sweep")
    bench.add_argument("--dims", type=int, nargs="+", required=True)
    bench.add_argument("--count", type=int, default=3)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--order", type=int, default=6)
    bench.add_argument("--eps", type=float, default=1e-3)
    bench.add_argument("--tol", type=float, default=1e-9)
    bench.add_argument("--max-iter", type=int, default=10000)
    bench.add_argument("--out", help="write the CSV here (default: stdout)")
    bench.add_argument("--certificate-dir", help="write per-instance certificates")
    bench.set_defaults(func=cmd_bench)

    check = sub.add_parser("check", help="re-verify a certificate")
    check.add_argument("--certificate", required=True)
    check.add_argument("--input", required=True, help="matrix family JSON")
    check.add_argument("--tol", type=float, default=1e-8)
    check.set_defaults(func=cmd_check)
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, InstanceError, ResourceLimitError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RiccatiEscapeError as exc:
        print(
            f"error: {exc}\nhint: retry with a smaller --tau", file=sys.stderr
        )
        return 3
    except DivergenceError as exc:
        print(f"error: iteration diverged: {exc}", file=sys.stderr)
        return 3
    except NumericFailure as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
