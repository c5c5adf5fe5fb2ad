"""Command-line driver: ``pdnfem <subcommand> [options]``.

Exit codes: 0 success, 1 a computed audit or identity failed, 2 usage error.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import os
import sys

import numpy as np

THREADS_ENV = "PDNFEM_THREADS"
FLOAT_FMT = "%.6e"


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# output


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % v
    if v is None:
        return ""
    return str(v)


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (float, np.floating)):
        return float(FLOAT_FMT % v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def render(rows, fmt, text=None):
    if fmt == "json":
        return json.dumps([{k: _json_value(v) for k, v in r.items()} for r in rows],
                          indent=1) + "\n"
    if fmt == "text":
        return text() if text else _text_table(rows)
    buf = io.StringIO()
    if rows:
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(rows[0].keys())
        for r in rows:
            w.writerow([_fmt(v) for v in r.values()])
    return buf.getvalue()


def _text_table(rows, header=None):
    if not rows:
        return ""
    header = header or list(rows[0].keys())
    cells = [[_fmt(r.get(h)) for h in header] for r in rows]
    widths = [max(len(h), *(len(c[i]) for c in cells)) for i, h in enumerate(header)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(header, widths))]
    lines += ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# meshes


def _mesh(args, dim=None):
    from .mesh import MeshError, build_structured_2d, build_structured_3d, named_mesh, read_mesh

    try:
        if args.mesh_file:
            mesh = read_mesh(args.mesh_file)
        elif args.mesh == "structured":
            d = args.dim or dim
            if d is None:
                raise UsageError("--mesh structured needs --dim")
            mesh = (build_structured_2d if d == 2 else build_structured_3d)(args.n)
        else:
            mesh = named_mesh(args.mesh)
    except (MeshError, OSError, KeyError, ValueError) as e:
        raise UsageError(f"cannot load mesh: {e}") from None
    if dim is not None and mesh.dim != dim:
        raise UsageError(f"this command needs a {dim}D mesh, got {mesh.dim}D")
    return mesh


def _mesh_label(args):
    if args.mesh_file:
        return os.path.basename(args.mesh_file)
    if args.mesh == "structured":
        return f"structured-n{args.n}"
    return args.mesh


# --------------------------------------------------------------------------
# subcommands: each returns (rows, ok, text renderer or None)


def _maxwell(args, d):
    from .analysis import maxwell_experiment

    r = maxwell_experiment(args.element, args.p, args.n, d, count=args.count,
                           zero_rtol=args.threshold, convention=args.convention,
                           check_kernel=not args.no_kernel_check)
    rows = r.rows()
    for row in rows:
        row.update(element=args.element, p=args.p, n=args.n)
    rows.append({"mode": "zero-modes", "exact": r.gradient_rank, "computed": r.spectrum.n_zero,
                 "rel_error": None, "element": args.element, "p": args.p, "n": args.n})

    def text():
        head = ["exact"] + [str(v) for v in r.exact]
        num = [args.element] + [f"{v:.4f}" for v in r.computed]
        w = max(len(s) for s in head + num)
        lines = ["  ".join(s.rjust(w) for s in head), "  ".join(s.rjust(w) for s in num),
                 f"zero modes {r.spectrum.n_zero}, gradient rank {r.gradient_rank}, "
                 f"dim {r.dim}"]
        return "\n".join(lines) + "\n"

    return rows, r.zero_modes_match, text


def cmd_maxwell2d(args):
    return _maxwell(args, 2)


def cmd_maxwell3d(args):
    return _maxwell(args, 3)


def cmd_dim_audit(args):
    from .spaces import audit_dimensions

    mesh = _mesh(args, 3)
    rows, ok = [], True
    for tag in args.space.split(","):
        for p in _degrees(args):
            r = audit_dimensions(tag.strip(), p, mesh, rtol=args.rtol)
            row = r.as_dict()
            row["mesh"] = _mesh_label(args)
            row["status"] = "match" if r.match else "MISMATCH"
            rows.append(row)
            ok &= r.match
    return rows, ok, None


def _degrees(args):
    if args.p_max is None:
        return [args.p]
    return list(range(args.p, args.p_max + 1))


def cmd_exactness(args):
    from .analysis import exactness_check

    mesh = _mesh(args, 2 if args.complex == "2D" else 3)
    r = exactness_check(args.complex, args.p, mesh)
    rows = []
    for tag, q, n in zip(r.tags, r.degrees, r.dims):
        rows.append({"complex": r.complex, "item": f"dim {tag}_{q}", "value": n, "ok": True})
    for i, (rk, k) in enumerate(zip(r.ranks, r.kernels)):
        rows.append({"complex": r.complex, "item": f"rank d{i}", "value": rk, "ok": True})
        rows.append({"complex": r.complex, "item": f"kernel d{i}", "value": k, "ok": True})
    for name, (ok, disc) in r.checks.items():
        rows.append({"complex": r.complex, "item": name, "value": disc, "ok": ok})
    return rows, r.ok, None


def cmd_condition(args):
    from .analysis import condition_experiment

    d = 2 if args.element == "hrot" else 3
    if args.mesh is None and not args.mesh_file:
        args.mesh = "two-tri" if d == 2 else "two-tet"
    mesh = _mesh(args, d)
    reps = condition_experiment(args.element, range(args.p_min, args.p_max + 1), mesh)
    rows = []
    for r in reps:
        row = r.as_dict()
        row["mesh"] = _mesh_label(args)
        rows.append(row)

    def text():
        t = [{"p": r.p, "M": r.kappa_M, "M~": r.kappa_Mt, "S": r.kappa_S, "S~": r.kappa_St}
             for r in reps]
        return _text_table(t)

    return rows, True, text


def cmd_tabulate(args):
    from .orthopoly import lattice
    from .refelem import build_element, tabulate

    try:
        elem = build_element(args.element, args.p, args.dim)
    except ValueError as e:
        raise UsageError(str(e)) from None
    if args.points:
        pts = np.array([[float(x) for x in p.split(",")] for p in args.points.split(";")])
        if pts.shape[1] != elem.dim + 1:
            raise UsageError(f"points need {elem.dim + 1} barycentric coordinates")
    else:
        pts = lattice(elem.dim, 2)
    vals = tabulate(elem, args.cell, pts, args.what)
    rows = []
    for f, bf in enumerate(elem.basis):
        for q in range(len(pts)):
            comps = vals[f, q].reshape(-1)
            for c, v in enumerate(comps):
                rows.append({"function": f, "kind": bf.kind, "continuity": bf.continuity,
                             "direction": bf.direction, "point": q, "component": c,
                             "value": float(v)})
    return rows, True, None


def cmd_mesh_info(args):
    from .mesh import clough_tocher_split, worsey_farin_split

    mesh = _mesh(args)
    if args.split == "wf":
        mesh = worsey_farin_split(mesh).child
    elif args.split == "ct":
        mesh = clough_tocher_split(mesh).child
    counts = mesh.counts()
    names = ["V", "E", "F", "T"][: mesh.dim + 1]
    row = {"mesh": _mesh_label(args), "split": args.split, "dim": mesh.dim}
    row.update(zip(names, counts))
    row["euler"] = mesh.euler()
    row["boundary_facets"] = int(np.sum(mesh.boundary[mesh.dim - 1]))
    row["volume"] = float(np.sum(mesh.volumes))
    return [row], True, None


# --------------------------------------------------------------------------
# parser


def _common(p, mesh_default=None, with_mesh=True):
    p.add_argument("--format", choices=("csv", "json", "text"), default="csv")
    p.add_argument("--output", help="write the report to this file instead of stdout")
    p.add_argument("--threads", type=int, default=None,
                   help=f"BLAS thread cap (default: ${THREADS_ENV} or library default)")
    p.add_argument("--rtol", type=float, default=1e-9, help="relative rank threshold")
    if with_mesh:
        p.add_argument("--mesh", default=mesh_default,
                       help="single-tri | two-tri | single-tet | two-tet | structured")
        p.add_argument("--mesh-file", help="ASCII mesh file ('dim V C' header)")
        p.add_argument("--n", type=int, default=2, help="grid size for structured meshes")
        p.add_argument("--dim", type=int, choices=(2, 3), default=None)


def build_parser():
    ap = argparse.ArgumentParser(prog="pdnfem", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    for name, d, elems, el, p, n in (("maxwell2d", 2, ("hrot", "lagrange", "ned2"), "hrot", 2, 8),
                                     ("maxwell3d", 3, ("zh", "lagrange", "ned2"), "zh", 3, 2)):
        s = sub.add_parser(name, help=f"{d}D Maxwell eigenvalues on (0, pi)^{d}")
        _common(s, with_mesh=False)
        s.add_argument("--element", choices=elems, default=el)
        s.add_argument("--p", type=int, default=p)
        s.add_argument("--n", type=int, default=n)
        s.add_argument("--count", type=int, default=10)
        s.add_argument("--threshold", type=float, default=1e-8,
                       help="zero-mode threshold relative to the largest eigenvalue")
        s.add_argument("--convention", choices=("table", "physical"), default="table")
        s.add_argument("--no-kernel-check", action="store_true",
                       help="skip the gradient-rank audit of the zero modes")
        s.set_defaults(func=cmd_maxwell2d if d == 2 else cmd_maxwell3d)

    s = sub.add_parser("dim-audit", help="printed dimension formulas vs numeric nullspaces")
    _common(s, "single-tet")
    s.add_argument("--space", required=True, help="V0..V3, W0..W3 (comma separated)")
    s.add_argument("--p", type=int, required=True)
    s.add_argument("--p-max", type=int, default=None)
    s.set_defaults(func=cmd_dim_audit)

    s = sub.add_parser("exactness", help="rank checks for a discrete de Rham complex")
    _common(s, "single-tet")
    s.add_argument("--complex", choices=("V", "W", "2D"), required=True)
    s.add_argument("--p", type=int, required=True)
    s.set_defaults(func=cmd_exactness)

    s = sub.add_parser("condition", help="condition numbers of M, M~, S, S~")
    _common(s, None)
    s.add_argument("--element", choices=("hdiv", "hrot", "zh", "hcurl-wf", "scalar-lagrange"),
                   default="hdiv")
    s.add_argument("--p-min", type=int, default=3)
    s.add_argument("--p-max", type=int, default=9)
    s.set_defaults(func=cmd_condition)

    s = sub.add_parser("tabulate-basis", help="tabulate a reference element basis")
    _common(s, with_mesh=False)
    s.add_argument("--element", required=True,
                   choices=("lagrange", "vlagrange", "hrot_tri", "hcurl_tet_wf", "hdiv_tet",
                            "zhp_tet"))
    s.add_argument("--p", type=int, required=True)
    s.add_argument("--dim", type=int, choices=(2, 3), default=None)
    s.add_argument("--cell", type=int, default=0)
    s.add_argument("--what", choices=("value", "grad", "curl", "div"), default="value")
    s.add_argument("--points", help="barycentric points 'a,b,c;...' (default: degree-2 lattice)")
    s.set_defaults(func=cmd_tabulate)

    s = sub.add_parser("mesh-info", help="entity counts and Euler characteristic")
    _common(s, "single-tet")
    s.add_argument("--split", choices=("none", "ct", "wf"), default="none")
    s.set_defaults(func=cmd_mesh_info)
    return ap


def _thread_limit(n):
    """Cap BLAS threads; never raise a pool above its size at startup."""
    if n is None:
        env = os.environ.get(THREADS_ENV)
        try:
            n = int(env) if env else None
        except ValueError:
            raise UsageError(f"${THREADS_ENV} must be an integer") from None
    if n is None:
        return contextlib.nullcontext()
    if n < 1:
        raise UsageError("--threads must be positive")
    import scipy.linalg  # noqa: F401  (load every BLAS before inspecting the pools)
    from threadpoolctl import threadpool_info, threadpool_limits
    current = [lib["num_threads"] for lib in threadpool_info()]
    if not current or n >= max(current):
        return contextlib.nullcontext()
    return threadpool_limits(limits=n)


def main(argv=None):
    from .spaces import RankDecisionError

    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with _thread_limit(args.threads):
            rows, ok, text = args.func(args)
    except (UsageError, ValueError) as e:
        print(f"pdnfem {args.command}: error: {e}", file=sys.stderr)
        return 2
    except RankDecisionError as e:
        print(f"pdnfem {args.command}: {e}", file=sys.stderr)
        return 2
    out = render(rows, args.format, text)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(out)
    else:
        sys.stdout.write(out)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
