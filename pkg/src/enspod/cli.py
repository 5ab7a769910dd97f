"""Command-line interface: ``enspod {mesh,offline,online,verify,sweep-delta}``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import harness, mesh as meshmod
from .errors import EnsPodError

# config key -> (flag, argparse type, help)
_FLAGS = [
    ("r1", float, "outer radius"),
    ("r2", float, "inner radius"),
    ("center", str, "inner circle centre 'x,y'"),
    ("h_target", float, "target mesh size"),
    ("mesh_file", str, "read the mesh from this file instead of generating it"),
    ("dt", float, "time step"),
    ("t_start", float, "first snapshot time and start of the online window"),
    ("t_end", float, "final time"),
    ("snapshot_interval", float, "time between snapshots"),
    ("viscosities", str, "comma-separated viscosities, one per realization"),
    ("force", str, "body force: rotational or zero"),
    ("stokes_nu", float, "viscosity of the initial Stokes solve (default: per realization)"),
    ("R", int, "number of POD modes"),
    ("delta", float, "filter radius"),
    ("deltas", str, "comma-separated filter radii for sweep-delta"),
    ("output_dir", str, "output directory"),
    ("seed", int, "random seed for the invariant checks"),
]


def _add_config_flags(p):
    p.add_argument("--config", help="key = value configuration file")
    for key, typ, help_ in _FLAGS:
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None, help=help_)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--desk", dest="desk", action="store_true", default=None,
                   help="desk-scale defaults (coarse mesh, short window)")
    g.add_argument("--no-desk", dest="desk", action="store_false",
                   help="full-scale defaults")


def _config(args):
    overrides = {key: getattr(args, key) for key, _, _ in _FLAGS}
    overrides["desk"] = args.desk
    text = Path(args.config).read_text() if args.config else ""
    return harness.parse_config(text, **overrides)


def _offline_products(cfg):
    out = Path(cfg.output_dir)
    if (out / "snapshots.txt").exists() and (out / "mesh.txt").exists():
        return harness.load_offline(cfg, out)
    return harness.run_offline(cfg, out)


def cmd_mesh(args):
    cfg = _config(args)
    m = harness.build_mesh(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "mesh.txt").write_text(meshmod.save_mesh(m))
    nv = m.n_vertices + m.n_edges
    print(f"mesh: {m.n_vertices} vertices, {m.n_triangles} triangles, "
          f"{2 * nv} velocity unknowns, max diameter {m.diameters().max():.4f}")
    print(f"wrote {out / 'mesh.txt'}")
    return 0


def cmd_offline(args):
    cfg = _config(args)
    res = harness.run_offline(cfg, cfg.output_dir)
    (Path(cfg.output_dir) / "config.txt").write_text(cfg.to_text())
    print(f"snapshots: {res.snapshots.count} columns of length {res.snapshots.K}")
    print(f"POD: R = {res.basis.R}, lambda_1 = {res.basis.eigenvalues[0]:.6e}")
    print(f"wrote offline products to {cfg.output_dir}")
    return 0


def cmd_online(args):
    cfg = _config(args)
    off = _offline_products(cfg)
    rep = harness.run_online(cfg, off, cfg.output_dir)
    for k, v in rep.summary().items():
        print(f"{k} = {v:.6e}")
    print(f"wrote online results to {cfg.output_dir}")
    return 0


def cmd_verify(args):
    cfg = _config(args)
    off = _offline_products(cfg)
    results = harness.verify(cfg, off)
    for r in results:
        print(r.line())
    return 0 if all(r.ok for r in results) else 1


def cmd_sweep_delta(args):
    cfg = _config(args)
    off = _offline_products(cfg)
    rows, best = harness.sweep_delta(cfg, off, output_dir=cfg.output_dir)
    print("delta, time-averaged |KE - KE_benchmark|, time-averaged L2 error")
    for d, ke, l2 in rows:
        print(f"{d!r}, {ke:.6e}, {l2:.6e}")
    print(f"best delta by kinetic energy: {best!r}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="enspod", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, help_ in (
        ("mesh", cmd_mesh, "generate and validate the mesh"),
        ("offline", cmd_offline, "full-order runs, snapshots and POD basis"),
        ("online", cmd_online, "benchmark and reduced-order runs with diagnostics"),
        ("verify", cmd_verify, "run the invariant checks"),
        ("sweep-delta", cmd_sweep_delta, "kinetic-energy error over filter radii"),
    ):
        sp = sub.add_parser(name, help=help_)
        _add_config_flags(sp)
        sp.set_defaults(func=fn)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EnsPodError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
