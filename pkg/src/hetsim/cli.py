"""Command-line frontend.

    hetsim detect --image img.pgm [--platform sim|host] [--timing] [--describe]
    hetsim compare a.json b.json [--tol-pos 1.0] [--min-overlap 0.9]
    hetsim bench --sizes 320x240,640x480

Exit codes: 0 ok, 1 usage or failed comparison, 2 unreadable image or
document, 3 manifest/configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import runtime, surf_host
from .errors import BadImage, BadManifest, ConfigFileNotFound, SimError, SlotOccupied
from .fabric import DEFAULT_BUS_CLOCK_HZ, Kind
from .keypoints import Keypoint, KeypointDocument, overlap
from .pgm import read_pgm
from .surf_core import C_POINT, SurfParams
from .synth import blob_image

EXIT_OK, EXIT_USAGE, EXIT_IMAGE, EXIT_CONFIG = 0, 1, 2, 3
CONFIG_ERRORS = (ConfigFileNotFound, BadManifest, SlotOccupied)

log = logging.getLogger("hetsim")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _params(args) -> SurfParams:
    intervals = args.levels - 2 if args.intervals is None else args.intervals
    try:
        return SurfParams(args.min_hessian, args.octaves, intervals, args.levels).validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _params_echo(p: SurfParams) -> dict:
    return {"min_hessian": p.min_hessian, "n_octaves": p.n_octaves, "intervals": p.intervals, "levels": p.levels}


def _timing(ledger, entries=None) -> dict:
    entries = ledger.entries if entries is None else entries
    out = {k.value: 0 for k in Kind}
    for e in entries:
        out[e.kind.value] += e.duration
    out["total"] = sum(out.values())
    return {k: float(v) for k, v in out.items()}


def _write(text: str, out: str):
    if out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def cmd_detect(args) -> int:
    params = _params(args)
    if args.timing and args.platform != "sim":
        raise UsageError("--timing needs --platform sim")
    try:
        image = read_pgm(args.image)
    except BadImage as exc:
        print(f"hetsim: {args.image}: {exc}", file=sys.stderr)
        return EXIT_IMAGE
    platform = None
    if args.platform == "sim":
        platform = runtime.Platform(bus_clock_hz=args.bus_hz)
        try:
            platform.config("surf", args.manifest)
        except CONFIG_ERRORS as exc:
            print(f"hetsim: configuration failed: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        try:
            points = runtime.surf_detect(platform, image, params)
        except BadImage as exc:
            print(f"hetsim: {args.image}: {exc}", file=sys.stderr)
            return EXIT_IMAGE
    else:
        try:
            points = surf_host.detect_float(image, params)
        except BadImage as exc:
            print(f"hetsim: {args.image}: {exc}", file=sys.stderr)
            return EXIT_IMAGE
    if args.describe:
        kps = [Keypoint.from_point(p, theta, None if d is None else d.values)
               for p, (theta, d) in zip(points, surf_host.describe_points(image, points))]
    else:
        kps = [Keypoint.from_point(p) for p in points]
    doc = KeypointDocument(Path(args.image).name, _params_echo(params), kps, platform=args.platform)
    if args.timing:
        doc.timing = _timing(platform.ledger)
    _write(doc.encode(), args.out)
    return EXIT_OK


def cmd_compare(args) -> int:
    docs = []
    for path in (args.doc_a, args.doc_b):
        try:
            docs.append(KeypointDocument.decode(Path(path).read_text(encoding="utf-8")))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            print(f"hetsim: cannot read keypoint document {path}: {exc}", file=sys.stderr)
            return EXIT_IMAGE
    a, b = docs
    ab, ba = overlap(a.keypoints, b.keypoints, args.tol_pos)
    ok = ab >= args.min_overlap and ba >= args.min_overlap
    print(f"points      {len(a.keypoints)} {len(b.keypoints)}")
    print(f"overlap a->b {ab:.6f}")
    print(f"overlap b->a {ba:.6f}")
    print(f"result      {'match' if ok else 'mismatch'} (min overlap {args.min_overlap:g}, tol {args.tol_pos:g} px)")
    return EXIT_OK if ok else EXIT_USAGE


def parse_sizes(text: str) -> list[tuple[int, int]]:
    sizes = []
    for part in text.split(","):
        part = part.strip().lower()
        if not part:
            continue
        w, sep, h = part.partition("x")
        if not sep or not w.isdigit() or not h.isdigit() or int(w) == 0 or int(h) == 0:
            raise UsageError(f"malformed size {part!r}, expected WxH")
        sizes.append((int(w), int(h)))
    if not sizes:
        raise UsageError("no sizes given")
    return sizes


def bench(sizes, manifest=runtime.DEFAULT_MANIFEST, seed: int = 0, bus_hz: float = DEFAULT_BUS_CLOCK_HZ,
          params: SurfParams = SurfParams()) -> list[dict]:
    """Run the simulated flow once per size; one row of ledger figures per size."""
    platform = runtime.Platform(bus_clock_hz=bus_hz)
    info = platform.config("surf", manifest)
    config_s = float(info.ledger.entries[-1].duration)
    rows = []
    for w, h in sizes:
        start = len(platform.ledger.entries)
        points = runtime.surf_detect(platform, blob_image(h, w, seed), params)
        entries = platform.ledger.entries[start:]
        cycles = sum(e.payload for e in entries if e.kind is Kind.COMPUTE)
        t = _timing(platform.ledger, entries)
        rows.append({"size": f"{w}x{h}", "points": len(points), "cycles": cycles,
                     "pixel_cycles": cycles - C_POINT * len(points), "config": config_s,
                     "tx": t["tx"], "compute": t["compute"], "rx": t["rx"], "total": t["total"]})
    return rows


def cmd_bench(args) -> int:
    sizes = parse_sizes(args.sizes)
    try:
        rows = bench(sizes, args.manifest, args.seed, args.bus_hz)
    except CONFIG_ERRORS as exc:
        print(f"hetsim: configuration failed: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"config {rows[0]['config']:.6f} s (once)")
    print(f"{'size':>10} {'points':>7} {'cycles':>10} {'tx_s':>12} {'compute_s':>12} {'rx_s':>12} {'total_s':>12}  dominant")
    for r in rows:
        dom = "tx" if r["tx"] > r["compute"] else "compute"
        print(f"{r['size']:>10} {r['points']:>7} {r['cycles']:>10} {r['tx']:>12.6f} {r['compute']:>12.6f} "
              f"{r['rx']:>12.6f} {r['total']:>12.6f}  {dom}")
    for prev, cur in zip(rows, rows[1:]):
        ratio = cur["pixel_cycles"] / prev["pixel_cycles"]
        print(f"compute-cycle ratio {cur['size']}/{prev['size']} (point term removed): {ratio:.6f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hetsim", description="Simulated ARM+FPGA SURF detection")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("detect", help="detect keypoints in a PGM image")
    d.add_argument("--image", required=True)
    d.add_argument("--platform", choices=("sim", "host"), default="sim")
    d.add_argument("--manifest", default=str(runtime.DEFAULT_MANIFEST))
    d.add_argument("--min-hessian", type=float, default=10.0)
    d.add_argument("--octaves", type=int, default=1)
    d.add_argument("--intervals", type=int, default=None, help="default: levels - 2")
    d.add_argument("--levels", type=int, default=4)
    d.add_argument("--out", default="-")
    d.add_argument("--timing", action="store_true", help="append the simulated-time breakdown")
    d.add_argument("--describe", action="store_true", help="add orientation and 64-d descriptors")
    d.add_argument("--bus-hz", type=float, default=DEFAULT_BUS_CLOCK_HZ)
    d.set_defaults(func=cmd_detect)

    c = sub.add_parser("compare", help="compare two keypoint documents")
    c.add_argument("doc_a")
    c.add_argument("doc_b")
    c.add_argument("--tol-pos", type=float, default=1.0)
    c.add_argument("--min-overlap", type=float, default=0.9)
    c.set_defaults(func=cmd_compare)

    b = sub.add_parser("bench", help="timing breakdown over image sizes")
    b.add_argument("--sizes", required=True, help="comma-separated WxH list")
    b.add_argument("--manifest", default=str(runtime.DEFAULT_MANIFEST))
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--bus-hz", type=float, default=DEFAULT_BUS_CLOCK_HZ)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help and usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"hetsim: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SimError as exc:
        print(f"hetsim: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
