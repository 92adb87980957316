"""Command line entry point.

Verbs: run, resume, bench, analyze, registry. Exit codes: 0 on success,
2 for configuration problems (bad config file, bad arguments), 3 for I/O
problems (unreadable volume, corrupt checkpoint, failed write).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis, defects, storage
from .config import load_config
from .model import ConfigError

log = logging.getLogger("lbflow")


def _add_run(sub):
    p = sub.add_parser("run", help="run a simulation from a config file")
    p.add_argument("config", help="path to a run config")
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--steer", action="store_true",
                   help="enable the steering service regardless of config")
    p.add_argument("--quiet", action="store_true")


def _add_resume(sub):
    p = sub.add_parser("resume", help="continue from a checkpoint")
    p.add_argument("checkpoint", help="path to a .chk file")
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--quiet", action="store_true")


def _add_bench(sub):
    p = sub.add_parser("bench", help="measure site-update throughput")
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--components", type=int, default=1, choices=(1, 2, 3))
    p.add_argument("--workers", type=int, nargs="+", default=[1])


def _add_analyze(sub):
    p = sub.add_parser("analyze", help="post-process volume files")
    p.add_argument("volumes", nargs="+", help=".vol files, oldest first")
    p.add_argument("--structure-factor", metavar="OUT",
                   help="per-volume k1, X_max and peak count table")
    p.add_argument("--radial", metavar="OUT",
                   help="radially averaged spectrum of the last volume")
    p.add_argument("--detect-defects", metavar="OUT",
                   help="defect region table across all volumes")
    p.add_argument("--track", metavar="OUT",
                   help="defect count per timestep, with track summary")
    p.add_argument("--axis", default="x", choices=("x", "y", "z"),
                   help="slab projection axis for defect detection")
    p.add_argument("--thickness", type=int, default=8)
    p.add_argument("--window", type=int, default=32)
    p.add_argument("--stride", type=int, default=16)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--mesh", action="store_true",
                   help="use the mesh detector instead of regularity maps")


def _add_registry(sub):
    p = sub.add_parser("registry", help="serve the run registry")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8070)


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.max_steps is not None:
        config.max_steps = args.max_steps
    if args.workers is not None:
        config.workers = args.workers
    if args.steer:
        config.steering.enabled = True
    from .runner import run_config
    lattice = run_config(config, quiet=args.quiet)
    print(f"finished at t={lattice.timestep}")
    return 0


def _cmd_resume(args) -> int:
    from .runner import resume_checkpoint
    lattice = resume_checkpoint(args.checkpoint, max_steps=args.max_steps,
                                workers=args.workers, quiet=args.quiet)
    print(f"finished at t={lattice.timestep}")
    return 0


def _cmd_bench(args) -> int:
    from .bench import measure_rate, measure_scaling
    if len(args.workers) == 1:
        rate = measure_rate(args.size, args.steps, args.components,
                            workers=args.workers[0])
        print(f"size {args.size}^3  components {args.components}  "
              f"workers {args.workers[0]}  {rate:.3e} site-updates/s "
              f"({rate / 1e6:.2f} MLUPS)")
    else:
        rows = measure_scaling(args.size, args.steps, args.workers,
                               args.components)
        for r in rows:
            print(f"workers {r['workers']:2d}  {r['rate']:.3e} "
                  f"site-updates/s  efficiency {r['efficiency']:.2f}")
    return 0


def _load_volumes(paths):
    out = []
    for p in paths:
        field, dims, meta = storage.read_volume(p)
        out.append((meta.get("timestep", 0), field, dims, p))
    out.sort(key=lambda r: r[0])
    return out


def _detect(field, dims, t, args):
    axis = "xyz".index(args.axis)
    slabs = analysis.project_slabs(field, dims, axis, args.thickness)
    masks = []
    for slab in slabs:
        if args.mesh:
            masks.append(defects.mesh_detect(slab.image))
        else:
            rmap = defects.regularity_detect(slab.image,
                                             window=args.window,
                                             step=args.stride,
                                             threshold=args.threshold)
            masks.append(defects.regularity_mask(rmap, slab.image.shape))
    vol = defects.reconstruct_defects(masks, dims, axis, args.thickness)
    return defects.flood_fill_regions(vol, dims, timestep=t)


def _cmd_analyze(args) -> int:
    volumes = _load_volumes(args.volumes)
    if args.structure_factor:
        rows_t, rows_k1, rows_xmax, rows_np = [], [], [], []
        for t, field, dims, _ in volumes:
            spec = analysis.structure_factor(field, dims, timestep=t)
            x, xmax = analysis.x_summed_spectrum(spec)
            rows_t.append(t)
            rows_k1.append(analysis.mean_wavenumber(spec))
            rows_xmax.append(xmax)
            rows_np.append(analysis.count_peaks_2d(x))
        analysis.write_table(args.structure_factor,
                             "timestep\tk1\tx_max\tpeaks",
                             rows_t, rows_k1, rows_xmax, rows_np)
        print(f"wrote {args.structure_factor} ({len(rows_t)} rows)")
    if args.radial:
        t, field, dims, _ = volumes[-1]
        spec = analysis.structure_factor(field, dims, timestep=t)
        k, s = analysis.radial_spectrum(spec)
        analysis.write_table(args.radial, "k\ts", list(k), list(s))
        print(f"wrote {args.radial}")
    if args.detect_defects or args.track:
        frames = []
        for t, field, dims, path in volumes:
            regions = _detect(field, dims, t, args)
            frames.append((t, regions))
            print(f"{path}: {len(regions)} defect region(s)")
        if args.detect_defects:
            flat = [r for _, frame in frames for r in frame]
            defects.write_regions_table(args.detect_defects, flat)
            print(f"wrote {args.detect_defects} ({len(flat)} rows)")
        if args.track:
            dims = volumes[0][2]
            tracks, counts = defects.track_defects(frames, dims)
            analysis.write_table(args.track, "timestep\tregions",
                                 [c[0] for c in counts],
                                 [c[1] for c in counts])
            for tr in tracks:
                disp = tr.displacements(dims)
                total = float(np.sum(disp)) if len(disp) else 0.0
                print(f"track {tr.ident}: lifetime {tr.lifetime} "
                      f"frame(s), path length {total:.2f}")
            print(f"wrote {args.track} ({len(counts)} rows)")
    return 0


def _cmd_registry(args) -> int:
    from .registry import RegistryServer
    server = RegistryServer(args.host, args.port)
    print(f"registry on http://{server.host}:{server.port}/list")
    try:
        server.serve()
    except KeyboardInterrupt:
        server.stop()
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(asctime)s %(name)s %(message)s")
    parser = argparse.ArgumentParser(
        prog="lbflow",
        description="multicomponent lattice fluid simulator")
    sub = parser.add_subparsers(dest="verb", required=True)
    _add_run(sub)
    _add_resume(sub)
    _add_bench(sub)
    _add_analyze(sub)
    _add_registry(sub)
    args = parser.parse_args(argv)
    handler = {"run": _cmd_run, "resume": _cmd_resume, "bench": _cmd_bench,
               "analyze": _cmd_analyze, "registry": _cmd_registry}[args.verb]
    try:
        return handler(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (storage.StorageError, OSError) as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
