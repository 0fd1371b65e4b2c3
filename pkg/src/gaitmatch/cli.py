"""Command-line entry point: one subcommand per pipeline stage.

Exit codes: 0 success, 1 domain/validation error, 2 usage error.
``GAITMATCH_THREADS`` sets the default for ``--threads``.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import formats, gon
from .clothing import level_name, non_overlap_area, relative_thickness, thickness_level
from .errors import GaitMatchError
from .evaluation import GALLERY_LEVEL, METRICS, PROBE_LEVELS, evaluate_protocol
from .kinematics import retarget_sequence
from .metrics import alignment_report
from .skeleton import bone_lengths, estimate_skeleton, match_skeleton_lengths
from .walker import WalkerSpec, read_walker_spec, synth_walker, walker_rest_pose

log = logging.getLogger("gaitmatch")


class UsageError(Exception):
    pass


def _default_threads() -> int:
    raw = os.environ.get("GAITMATCH_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _table(rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows) + "\n"


def _require_files(*paths) -> None:
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise FileNotFoundError(f"input file not found: {p}")


# --- subcommands -------------------------------------------------------------

def cmd_synth(args) -> int:
    _require_files(args.spec)
    spec = read_walker_spec(args.spec) if args.spec else WalkerSpec()
    formats.write_pose_sequence(synth_walker(spec), args.output)
    if args.rest_out:
        formats.write_rest_pose(walker_rest_pose(spec), args.rest_out, spec.frame_rate)
    return 0


def cmd_match(args) -> int:
    _require_files(args.rest, args.source)
    rest = formats.read_rest_pose(args.rest)
    if args.source:
        lengths = estimate_skeleton(formats.read_pose_sequence(args.source), args.aggregator)
    else:
        lengths = bone_lengths(rest.positions, rest.topology) * args.scale
    formats.write_rest_pose(match_skeleton_lengths(rest, lengths), args.output)
    return 0


def cmd_retarget(args) -> int:
    _require_files(args.source, args.source_rest, args.target_rest)
    source = formats.read_pose_sequence(args.source)
    src_rest = formats.read_rest_pose(args.source_rest)
    tgt_rest = formats.read_rest_pose(args.target_rest)
    result = retarget_sequence(source, src_rest, tgt_rest, threads=args.threads)
    formats.write_pose_sequence(result.sequence, args.output)
    if args.drive_out:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["frame", "bone", "w", "x", "y", "z"])
        names = source.topology.bone_names
        for t, rot in enumerate(result.drive):
            for name, q in zip(names, rot.quats):
                w.writerow([t, name] + [formats.fmt_float(v) for v in q])
        Path(args.drive_out).write_text(buf.getvalue(), encoding="utf-8")
    return 0


def cmd_validate(args) -> int:
    _require_files(args.a, args.b)
    a = formats.read_pose_sequence(args.a)
    b = formats.read_pose_sequence(args.b)
    report = alignment_report(a, b, root_relative=args.root_relative, threads=args.threads)
    doc = report.as_dict()
    if args.pretty:
        rows = [["quantity", "value"]] + [[k, repr(v) if isinstance(v, float) else str(v)] for k, v in doc.items()]
        _emit(_table(rows), args.output)
    else:
        _emit(formats.dumps_keyvalue(doc), args.output)
    return 0


def _thickness_row(unclothed_path, clothed_path) -> tuple[int, int, float, int]:
    u = formats.read_silhouette(unclothed_path)
    c = formats.read_silhouette(clothed_path)
    t = relative_thickness(u, c)
    return non_overlap_area(u, c), u.area, t, thickness_level(t)


def cmd_thickness(args) -> int:
    u, c = Path(args.unclothed), Path(args.clothed)
    if u.is_dir() != c.is_dir():
        raise UsageError("--unclothed and --clothed must both be files or both be directories")
    if not u.is_dir():
        _require_files(u, c)
        area, base, t, lv = _thickness_row(u, c)
        doc = {"non_overlap": area, "unclothed_area": base, "relative_thickness": t, "level": level_name(lv)}
        _emit(formats.dumps_keyvalue(doc), args.output)
        return 0

    # batch: unclothed/<subject>.pgm against every clothed/<subject>/<outfit>.pgm
    jobs = []
    for upath in sorted(u.glob("*.pgm")):
        subject = upath.stem
        for cpath in sorted((c / subject).glob("*.pgm")):
            jobs.append((subject, cpath.stem, upath, cpath))
    if not jobs:
        raise UsageError(f"no <subject>.pgm / <subject>/<outfit>.pgm pairs found under {u} and {c}")
    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        results = list(pool.map(lambda j: _thickness_row(j[2], j[3]), jobs))
    header = ["subject", "outfit", "non_overlap", "unclothed_area", "relative_thickness", "level"]
    rows = [[s, o, str(a), str(b), repr(t), level_name(lv)] for (s, o, _, _), (a, b, t, lv) in zip(jobs, results)]
    if args.pretty:
        _emit(_table([header] + rows), args.output)
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        _emit(buf.getvalue(), args.output)
    return 0


def cmd_evaluate(args) -> int:
    _require_files(args.embeddings)
    emb = formats.read_embeddings(args.embeddings)
    probes = args.probes.split(",") if args.probes else PROBE_LEVELS
    report = evaluate_protocol(emb, args.gallery, probes, args.metric)
    if args.csv:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "probes", "excluded", "R1", "mAP"])
        for lv, n, ex, r1, ap in report.rows():
            w.writerow([lv, n, ex, repr(r1), repr(ap)])
        Path(args.csv).write_text(buf.getvalue(), encoding="utf-8")
    if args.pretty:
        rows = [["level", "probes", "R1", "mAP"]]
        rows += [[lv, str(n), f"{r1:.1f}", f"{ap:.1f}"] for lv, n, _, r1, ap in report.rows()]
        _emit(_table(rows), args.output)
    else:
        _emit(formats.dumps_keyvalue(report.as_dict()), args.output)
    return 0


def cmd_gon_check(args) -> int:
    _require_files(args.tensor)
    x = formats.read_tensor(args.tensor)
    strips = gon.equal_partition(x.shape[2], args.strips)
    results = gon.check_invariants(x, strips, eps=args.eps)
    lines = [f"{name}={'pass' if ok else 'FAIL'} ({detail})" for name, ok, detail in results]
    lines.insert(0, f"strips={','.join(str(h) for h in strips)}")
    ok = all(r[1] for r in results)
    lines.append(f"overall={'pass' if ok else 'FAIL'}")
    _emit("\n".join(lines) + "\n", args.output)
    return 0 if ok else 1


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=_default_threads(),
                        help="worker threads (output is identical for any value)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="gaitmatch", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic walking sequence")
    s.add_argument("--spec", help="walker spec JSON (defaults if omitted)")
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--rest-out", help="also write the walker's rest pose")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("match", parents=[common], help="impose bone lengths on a rest pose")
    s.add_argument("--rest", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--source", help="pose sequence to estimate bone lengths from")
    g.add_argument("--scale", type=float, help="uniform length factor")
    s.add_argument("--aggregator", choices=("median", "mean"), default="median")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_match)

    s = sub.add_parser("retarget", parents=[common], help="retarget a pose sequence onto another skeleton")
    s.add_argument("--source", required=True)
    s.add_argument("--source-rest", required=True)
    s.add_argument("--target-rest", required=True)
    s.add_argument("-o", "--output", required=True)
    s.add_argument("--drive-out", help="write per-frame drive quaternions as CSV")
    s.set_defaults(func=cmd_retarget)

    s = sub.add_parser("validate", parents=[common], help="joint position / angle alignment report")
    s.add_argument("--a", required=True)
    s.add_argument("--b", required=True)
    s.add_argument("--root-relative", action="store_true", help="subtract the root joint per frame")
    s.add_argument("--pretty", action="store_true")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("thickness", parents=[common], help="relative clothing thickness and THK level")
    s.add_argument("--unclothed", required=True, help="PGM file, or directory of <subject>.pgm")
    s.add_argument("--clothed", required=True, help="PGM file, or directory of <subject>/<outfit>.pgm")
    s.add_argument("--pretty", action="store_true")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_thickness)

    s = sub.add_parser("evaluate", parents=[common], help="Rank-1 / mAP per thickness level")
    s.add_argument("--embeddings", required=True)
    s.add_argument("--metric", choices=METRICS, default="euclidean")
    s.add_argument("--gallery", default=GALLERY_LEVEL)
    s.add_argument("--probes", help="comma-separated probe covariates (default THK1..THK9)")
    s.add_argument("--csv", help="also write the report as CSV")
    s.add_argument("--pretty", action="store_true")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("gon-check", parents=[common], help="run the normalisation invariant suite on a tensor")
    s.add_argument("--tensor", required=True)
    s.add_argument("--strips", type=int, default=gon.DEFAULT_STRIPS)
    s.add_argument("--eps", type=float, default=gon.DEFAULT_EPS)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_gon_check)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.print_usage(sys.stderr)
        print("gaitmatch: error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"gaitmatch: error: {exc}", file=sys.stderr)
        return 2
    except (GaitMatchError, OSError) as exc:
        print(f"gaitmatch: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
