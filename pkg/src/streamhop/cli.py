"""Command-line front end.

    streamhop gen --n 100 --m 300 --churn 1 --seed 5 --out g.dgs
    streamhop spanner --stream g.dgs --eps 0.5 --kappa 4 --rho 0.5 --out h.edges --report r.json
    streamhop hopset --stream w.dgs --eps 0.5 --kappa 2 --rho 0.5 --auto-lambda --out h.hopset
    streamhop asp --stream w.dgs --sources 1,2,3 --eps 0.5 --rho 0.5 --weighted --out d.tsv
    streamhop validate --graph g.dgs --spanner h.edges --eps 0.5 --beta 216 --pairs 500 --json
    streamhop stats --stream g.dgs
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import oracle
from .explore import lambda_bound
from .hopset import HopsetEdge, aspect_ratio_reduce, multi_scale_hopset
from .paths import multi_source_asp_unweighted, multi_source_asp_weighted
from .spanner import build_spanner
from .stream import (ConstructionError, StreamParseError, final_edges, generate_stream, load_stream,
                     save_stream, validate_strict_turnstile)

SCHEMA = "1"
log = logging.getLogger("streamhop")


class ArgumentError(Exception):
    pass


def _fmt(w: float) -> str:
    return repr(float(w)) if w != int(w) else str(int(w))


def _report(args, command: str, stream, output_size: int, params: dict, timings: dict, validation=None,
            extra=None) -> dict:
    rep = {"schema": SCHEMA, "command": command, "passes": stream.passes_taken,
           "peak_sketch_bytes": stream.ledger.summary()["peak_bytes"],
           "per_module_peak_bytes": stream.ledger.summary()["per_module_peak"],
           "output_size": output_size, "params": params, "timings": timings}
    if validation is not None:
        rep["validation"] = validation
    if extra:
        rep.update(extra)
    if getattr(args, "report", None):
        Path(args.report).write_text(json.dumps(rep, indent=2, sort_keys=True, default=_json_default) + "\n")
    return rep


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, set):
        return sorted(x)
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(type(x))


def _scalars(rows: list[dict]) -> list[dict]:
    """Phase summaries without the bulky per-vertex objects."""
    keep = (int, float, str, bool, np.integer, np.floating)
    return [{k: v for k, v in r.items() if isinstance(v, keep)} for r in rows]


def _load(path, permute_seed=None):
    st = load_stream(path)
    return st.permuted(permute_seed) if permute_seed is not None else st


# subcommands

def cmd_gen(args) -> int:
    if args.n < 2 or args.m < 0:
        raise ArgumentError("need n >= 2 and m >= 0")
    st = generate_stream(args.n, args.m, args.churn, args.weighted, args.max_weight, args.seed,
                         log_weights=args.log_weights)
    save_stream(st, args.out)
    print(f"wrote {len(st)} updates on n={st.n} to {args.out}")
    return 0


def cmd_stats(args) -> int:
    st = _load(args.stream)
    edges = final_edges(st)
    info = validate_strict_turnstile(st)
    max_w = max(edges.values(), default=0.0)
    out = {"schema": SCHEMA, "n": st.n, "updates": len(st), "final_edges": len(edges),
           "max_weight": max_w, "lambda_bound": max(1.0, (st.n - 1) * max(max_w, 1.0)),
           "weighted": st.weighted, "strict_turnstile": info}
    print(json.dumps(out, indent=2, sort_keys=True, default=_json_default))
    return 0


def cmd_spanner(args) -> int:
    st = _load(args.stream, args.permute_seed)
    if st.weighted:
        log.warning("stream is weighted; weights are ignored by the spanner")
    t0 = time.perf_counter()
    sp = build_spanner(st, args.eps, args.kappa, args.rho, seed=args.seed, c1=args.c1)
    t1 = time.perf_counter()
    lines = "".join(f"{a} {b}\n" for a, b in sp.sorted_edges())
    Path(args.out).write_text(lines)
    params = {"eps": args.eps, "kappa": args.kappa, "rho": args.rho, "seed": args.seed, "c1": args.c1,
              "beta": sp.params.beta, "ell": sp.params.ell, "delta": list(sp.params.delta),
              "threads": args.threads}
    validation = None
    hist = None
    if args.pairs:
        G = final_edges(st)
        pairs = oracle.sample_pairs(st.n, G, args.pairs, args.seed)
        validation = oracle.validate_spanner(st.n, G, sp.edges, args.eps, sp.params.beta, pairs)
        hist = _stretch_histogram(st.n, G, sp.edges, pairs)
    _report(args, "spanner", st, len(sp.edges), params, {"build_s": t1 - t0}, validation,
            {"phases": _scalars(sp.phases), "retries": sp.retries, "stretch_histogram": hist})
    print(f"spanner: {len(sp.edges)} edges, {sp.passes} passes")
    return 0


def _stretch_histogram(n, G, edges, pairs) -> dict:
    sub = {(min(a, b), max(a, b)): 1.0 for a, b in edges}
    srcs = sorted({u for u, _ in pairs})
    dg = oracle.distances_from(n, G, srcs, weighted=False)
    dh = oracle.distances_from(n, sub, srcs, weighted=False)
    row = {u: i for i, u in enumerate(srcs)}
    hist: dict[str, int] = {}
    for u, v in pairs:
        g, h = dg[row[u], v], dh[row[u], v]
        if not math.isfinite(g) or g == 0:
            continue
        key = f"{h - g:.0f}"
        hist[key] = hist.get(key, 0) + 1
    return {"additive_slack": dict(sorted(hist.items(), key=lambda kv: float(kv[0])))}


def _lam(args, st) -> float:
    if args.lam is not None:
        if args.lam < 1:
            raise ArgumentError("--lam must be at least 1")
        return args.lam
    if args.auto_lambda:
        return lambda_bound(st)
    raise ArgumentError("give --lam or --auto-lambda")


def write_hopset(path, edges, with_paths: bool) -> None:
    with open(path, "w") as fh:
        for e in edges:
            line = f"{e.u} {e.v} {_fmt(e.weight)} {e.scale}"
            if with_paths and e.path is not None:
                line += " path: " + " ".join(str(x) for x in e.path)
            fh.write(line + "\n")


def read_hopset(path) -> list[HopsetEdge]:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        head, _, tail = line.partition("path:")
        parts = head.split()
        if len(parts) != 4:
            raise ArgumentError(f"{path}:{lineno}: expected 'u v w k [path: ...]'")
        path_v = tuple(int(x) for x in tail.split()) if tail.strip() else None
        out.append(HopsetEdge(int(parts[0]), int(parts[1]), float(parts[2]), int(parts[3]), "hop", path_v))
    return out


def cmd_hopset(args) -> int:
    st = _load(args.stream, args.permute_seed)
    t0 = time.perf_counter()
    if args.reduce_aspect:
        H = aspect_ratio_reduce(st, args.eps, args.kappa, args.rho, args.seed, beta_override=args.beta_override,
                                path_reporting=args.path_reporting)
        lam = None
    else:
        lam = _lam(args, st)
        H = multi_scale_hopset(st, args.eps, args.kappa, args.rho, lam, args.seed, args.path_reporting,
                               args.beta_override)
    t1 = time.perf_counter()
    write_hopset(args.out, H.edges, args.path_reporting)
    p = H.params
    params = {"eps": args.eps, "kappa": args.kappa, "rho": args.rho, "seed": args.seed, "lam": lam,
              "beta": p.beta, "hopbound": H.hopbound, "k0": p.k0, "k_lam": p.k_lam, "ell": p.ell,
              "reduce_aspect": args.reduce_aspect, "beta_override": args.beta_override, "threads": args.threads}
    validation = None
    if args.pairs:
        G = final_edges(st)
        pairs = oracle.sample_pairs(st.n, G, args.pairs, args.seed)
        validation = oracle.validate_hopset(st.n, G, H.edges, args.eps, H.hopbound, pairs,
                                            exact_paths=not args.reduce_aspect)
    extra = {}
    if args.reduce_aspect:
        extra = {"relevant_scales": H.info["relevant"], "star_edges": len(H.info["contraction"].stars)}
    _report(args, "hopset", st, len(H), params, {"build_s": t1 - t0}, validation, extra)
    print(f"hopset: {len(H)} edges, {st.passes_taken} passes")
    return 0


def _parse_sources(text: str) -> list[int]:
    try:
        out = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ArgumentError(f"bad --sources {text!r}") from None
    if not out:
        raise ArgumentError("--sources is empty")
    return out


def cmd_asp(args) -> int:
    st = _load(args.stream, args.permute_seed)
    S = _parse_sources(args.sources)
    t0 = time.perf_counter()
    rows = []
    if args.weighted:
        lam = args.lam if args.lam is not None else None
        R = multi_source_asp_weighted(st, S, args.eps, args.rho, args.kappa, lam, args.seed,
                                      args.beta_override, args.reduce_aspect)
        for i, s in enumerate(R.sources):
            for v in range(1, st.n + 1):
                d = R.dist[i, v]
                if math.isfinite(d):
                    path = " ".join(str(x) for x in R.path(s, v)) if args.paths else None
                    rows.append((s, v, d, path))
        params = {"hopbound": R.hops, "hopset_edges": len(R.hopset)}
    else:
        R = multi_source_asp_unweighted(st, S, args.eps, args.rho, args.kappa, args.seed)
        for i, s in enumerate(R.sources):
            for v in range(1, st.n + 1):
                d = R.dist[i, v]
                if math.isfinite(d):
                    rows.append((s, v, d, None))
        params = {"bfs_depth": R.depth, "spanner_edges": len(R.spanner.edges)}
    t1 = time.perf_counter()
    with open(args.out, "w") as fh:
        for s, v, d, path in rows:
            fh.write(f"{s}\t{v}\t{_fmt(d)}" + (f"\t{path}" if path else "") + "\n")
    params.update({"eps": args.eps, "rho": args.rho, "kappa": args.kappa, "seed": args.seed,
                   "weighted": args.weighted, "sources": S, "threads": args.threads})
    _report(args, "asp", st, len(rows), params, {"build_s": t1 - t0})
    print(f"asp: {len(rows)} rows, {st.passes_taken} passes")
    return 0


def cmd_validate(args) -> int:
    st = _load(args.graph)
    G = final_edges(st)
    pairs = oracle.sample_pairs(st.n, G, args.pairs, args.seed)
    if (args.spanner is None) == (args.hopset is None):
        raise ArgumentError("give exactly one of --spanner and --hopset")
    if args.spanner:
        edges = []
        for lineno, line in enumerate(Path(args.spanner).read_text().splitlines(), 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise ArgumentError(f"{args.spanner}:{lineno}: expected 'u v'")
            edges.append((int(parts[0]), int(parts[1])))
        rep = oracle.validate_spanner(st.n, G, edges, args.eps, args.beta, pairs)
    else:
        edges = read_hopset(args.hopset)
        rep = oracle.validate_hopset(st.n, G, edges, args.eps, int(args.beta), pairs,
                                     exact_paths=not args.loose_paths)
    out = {"schema": SCHEMA, "command": "validate", "validation": rep}
    if args.json:
        print(json.dumps(out, indent=2, sort_keys=True, default=_json_default))
    else:
        print("ok" if rep["ok"] else "FAILED", f"({rep['pairs']} pairs)")
    return 0 if rep["ok"] else 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="streamhop", description="Multi-pass dynamic-stream spanners and hopsets.")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for numeric kernels")
    ap.add_argument("--log-level", default="WARNING")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, stream_flag="--stream"):
        p.add_argument(stream_flag, required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=argparse.SUPPRESS)

    g = sub.add_parser("gen", help="generate a random strict-turnstile stream")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--churn", type=float, default=0.0)
    g.add_argument("--weighted", action="store_true")
    g.add_argument("--max-weight", type=float, default=1.0)
    g.add_argument("--log-weights", action="store_true")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("stats", help="replay a stream and summarize its final graph")
    s.add_argument("--stream", required=True)
    s.set_defaults(func=cmd_stats)

    p = sub.add_parser("spanner", help="near-additive spanner of an unweighted stream")
    common(p)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--c1", type=float, default=3.0)
    p.add_argument("--pairs", type=int, default=0, help="validate on this many sampled pairs")
    p.add_argument("--permute-seed", type=int, default=None, help="replay updates in a permuted order")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_spanner)

    h = sub.add_parser("hopset", help="path-reporting hopset of a weighted stream")
    common(h)
    h.add_argument("--eps", type=float, required=True)
    h.add_argument("--kappa", type=float, required=True)
    h.add_argument("--rho", type=float, required=True)
    h.add_argument("--lam", type=float, default=None, help="aspect-ratio bound")
    h.add_argument("--auto-lambda", action="store_true", help="spend one pass to bound the aspect ratio")
    h.add_argument("--beta-override", type=float, default=None)
    h.add_argument("--reduce-aspect", action="store_true")
    h.add_argument("--path-reporting", action="store_true")
    h.add_argument("--pairs", type=int, default=0)
    h.add_argument("--permute-seed", type=int, default=None)
    h.add_argument("--out", required=True)
    h.add_argument("--report")
    h.set_defaults(func=cmd_hopset)

    a = sub.add_parser("asp", help="distances from a few sources")
    common(a)
    a.add_argument("--sources", required=True)
    a.add_argument("--eps", type=float, required=True)
    a.add_argument("--rho", type=float, required=True)
    a.add_argument("--kappa", type=float, default=None)
    a.add_argument("--weighted", action="store_true")
    a.add_argument("--lam", type=float, default=None)
    a.add_argument("--beta-override", type=float, default=None)
    a.add_argument("--reduce-aspect", action="store_true")
    a.add_argument("--paths", action="store_true", help="append the implementing path to each row")
    a.add_argument("--permute-seed", type=int, default=None)
    a.add_argument("--out", required=True)
    a.add_argument("--report")
    a.set_defaults(func=cmd_asp)

    v = sub.add_parser("validate", help="check a spanner or hopset against exact distances")
    common(v, "--graph")
    v.add_argument("--spanner")
    v.add_argument("--hopset")
    v.add_argument("--eps", type=float, required=True)
    v.add_argument("--beta", type=float, required=True)
    v.add_argument("--pairs", type=int, default=500)
    v.add_argument("--loose-paths", action="store_true", help="allow paths lighter than their edge")
    v.add_argument("--json", action="store_true")
    v.set_defaults(func=cmd_validate)
    return ap


def _set_threads(k: int) -> None:
    if k < 1:
        raise ArgumentError("--threads must be positive")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(k))


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as ex:
        return int(ex.code or 0)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _set_threads(args.threads)
        return args.func(args)
    except ConstructionError as ex:
        print(f"construction failed: {ex}", file=sys.stderr)
        return 1
    except (ArgumentError, ValueError, StreamParseError, FileNotFoundError) as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
