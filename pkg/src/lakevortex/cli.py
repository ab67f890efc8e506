"""Command-line front end.

    lakevortex kernel build CONFIG
    lakevortex run CONFIG
    lakevortex sweep CONFIG --N 64,256,1024
    lakevortex selfcheck [--config CONFIG]

Exit codes: 0 ok, 1 depth validation or selfcheck failure, 2 invalid config,
3 kernel build failure, 4 vortex collision, 5 continuum support escape.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import time

import numpy as np
from pydantic import ValidationError

from .config import ExperimentConfig, load_config
from .depth import DepthField, validate_depth
from .errors import CacheMismatch, CollisionImminent, NonConvergence, SupportEscape, ValidationFailure

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_KERNEL, EXIT_COLLISION, EXIT_SUPPORT = 0, 1, 2, 3, 4, 5
VALIDATION_RADII = np.geomspace(0.1, 1e3, 40)


class ConfigError(Exception):
    pass


def _log(msg):
    print(msg, file=sys.stderr, flush=True)


def _load(path) -> ExperimentConfig:
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        return load_config(path)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    except ValidationError as exc:
        raise ConfigError(f"{path}: invalid config\n{exc}") from exc


def _validate_depth(field: DepthField):
    rep = validate_depth(field, VALIDATION_RADII)
    if not rep.decay_ok:
        raise ValidationFailure("weighted depth derivatives grow with radius")
    return rep


def _table(cfg):
    from .runner import prepare_table
    _validate_depth(cfg.depth.field())
    t0 = time.perf_counter()
    table = prepare_table(cfg, log=_log)
    _log(f"kernel table ready (n={table.geometry.n}, m={table.m}) in {time.perf_counter() - t0:.1f}s")
    return table


def cmd_kernel_build(args) -> int:
    cfg = _load(args.config)
    table = _table(cfg)
    if cfg.kernel_cache is None:
        _log("no kernel_cache path configured; table was built but not saved")
    else:
        print(cfg.kernel_cache)
    _log(f"pre-symmetrization asymmetry {table.asymmetry:.3e}, c0={table.c0:.6g}")
    return EXIT_OK


def cmd_run(args) -> int:
    from .runner import run_experiment, write_run
    cfg = _load(args.config)
    table = _table(cfg)
    result = run_experiment(cfg, table, log=_log)
    write_run(cfg, table, result)
    s = result.summary
    _log(f"wrote {cfg.output_dir}: F_b(T)={s['F_b_final']}, Hs(T)={s['Hs_final']}, "
         f"conserved candidate={s['conserved_candidate']}")
    if not result.complete:
        raise result.error
    return EXIT_OK


def _parse_N(text):
    try:
        N = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"--N must be a comma-separated list of integers, got {text!r}") from exc
    if len(N) < 2:
        raise ConfigError("--N needs at least two values")
    if any(b <= a for a, b in zip(N, N[1:])) or N[0] < 1:
        raise ConfigError("--N must be strictly ascending positive integers")
    return N


def cmd_sweep(args) -> int:
    from .runner import atomic_write, manifest, run_sweep, sweep_csv
    N_list = _parse_N(args.N)
    cfg = _load(args.config)
    table = _table(cfg)
    rows, results, _ = run_sweep(cfg, table, N_list, log=_log)
    out = cfg.output_dir
    atomic_write(os.path.join(out, "sweep.csv"), sweep_csv(rows))
    atomic_write(os.path.join(out, "manifest.json"), json.dumps(manifest(cfg, table), indent=2) + "\n")
    F = [r["F_b_sup"] for r in rows]
    summary = {"N": [r["N"] for r in rows], "complete": all(r["complete"] for r in rows) and len(rows) == len(N_list),
               "F_b_sup": F, "Hs_T": [r["Hs_T"] for r in rows],
               "runs": [res.summary for res in results]}
    atomic_write(os.path.join(out, "summary.json"), json.dumps(summary, indent=2) + "\n")
    for res in results:
        if not res.complete:
            raise res.error
    return EXIT_OK


# -- selfcheck --------------------------------------------------------------

def _selfcheck_items(cache_path, depth):
    from . import diagnostics as dg
    from .dynamics import VortexEnsemble, simulate
    from .elliptic import residual_lake, solve_lake_elliptic
    from .grid import Grid, sample
    from .kernel import (build_kernel_table, eval_g_b, load_or_build, load_table, save_table,
                         velocity_sum)

    def ring():
        eta = 0.1
        errs = [abs(np.subtract(*dg.ring_average_identity(np.array([r, 0.0]), np.zeros(2), eta, 256)))
                for r in (0.0, eta / 2, 2 * eta)]
        return max(errs) <= 1e-10, f"max defect {max(errs):.2e}"

    def mb_rate():
        bump = DepthField("radial-gaussian-bump", (0.5, 1.0))
        y = np.array([0.7, 0.2])
        etas = np.array([0.1, 0.05, 0.025])
        err = [abs(dg.m_b(y, e, bump, 64) - math.sqrt(bump.b(y))) for e in etas]
        slope = np.polyfit(np.log(etas), np.log(err), 1)[0]
        # the bound is first order; smooth depths converge at second order
        return slope >= 0.8, f"slope {slope:.3f} (bound needs >= 1)"

    def flat():
        one = DepthField("constant", (1.0,))
        g = Grid(64, 8.0)
        t = build_kernel_table(one, g, 9)
        v = velocity_sum(t, one, [[1.0, 0.0]], [[0.0, 0.0]], [1.0])[0]
        four = DepthField("constant", (4.0,))
        g4 = eval_g_b(build_kernel_table(four, g, 9), four, [0.0, 0.0], [math.exp(-2 * math.pi), 0.0])
        ok = (np.max(np.abs(t.S)) == 0.0 and abs(v[0]) < 1e-15 and abs(v[1] - 1 / (2 * math.pi)) < 1e-15
              and abs(g4 - 4.0) < 1e-12)
        return ok, f"u(1,0)=({v[0]:.3g}, {v[1]:.6f}), g_b={g4:.12f}"

    def period():
        one = DepthField("constant", (1.0,))
        t = build_kernel_table(one, Grid(64, 8.0), 9)
        tr = simulate(VortexEnsemble([[-0.5, 0.0], [0.5, 0.0]]), t, one, 40.0, 1e-2)
        ang = np.unwrap(np.arctan2(tr.positions[:, 1, 1], tr.positions[:, 1, 0]))
        k = int(np.searchsorted(ang, 2 * math.pi))
        P = tr.times[k - 1] + (2 * math.pi - ang[k - 1]) * (tr.times[k] - tr.times[k - 1]) / (ang[k] - ang[k - 1])
        rel = abs(P / (4 * math.pi**2) - 1)
        return rel <= 1e-3, f"period {P:.5f} (rel {rel:.1e})"

    def manufactured():
        bump = DepthField("radial-gaussian-bump", (0.5, 1.0))
        g = Grid(128, 8.0)
        exact = sample(g, lambda p: np.exp(-np.sum(p * p, axis=-1)))
        omega = sample(g, lambda p: _manufactured_rhs(bump, p))
        psi = solve_lake_elliptic(bump, g, omega)
        err = np.max(np.abs((psi.values - psi.values.mean()) - (exact.values - exact.values.mean())))
        res = residual_lake(bump, psi, omega)
        return err <= 5e-3 and res <= 0.05, f"L_inf error {err:.2e}, residual {res:.2e}"

    def cache():
        g = Grid(64, 8.0)
        table = build_kernel_table(depth, g, 9)
        path = cache_path
        save_table(table, path)
        with open(path, "r+b") as fh:
            fh.seek(200)
            byte = fh.read(1)
            fh.seek(200)
            fh.write(bytes([byte[0] ^ 0xFF]))
        notes = []
        try:
            load_table(path, depth, g, 9)
            return False, "corrupted cache was accepted"
        except CacheMismatch as exc:
            notes.append(f"rejected: {exc}")
        t2 = load_or_build(path, depth, g, 9)
        t3 = load_table(path, depth, g, 9)
        q = np.array([[0.3, -0.1], [-0.8, 0.5], [1.1, 0.9]])
        same = dg.interaction_energy(q, t3, depth) == dg.interaction_energy(q, table, depth)
        same = same and np.array_equal(t2.S, table.S)
        return same, notes[0] + "; rebuilt and reloaded"

    return [("ring identity", ring), ("m_b rate", mb_rate), ("constant-depth degeneracy", flat),
            ("two-vortex period", period), ("manufactured elliptic n=128", manufactured),
            ("kernel cache corruption", cache)]


def _manufactured_rhs(depth: DepthField, p):
    """``-div((1/b) grad psi*)`` for ``psi* = exp(-|x|^2)``."""
    s = depth.evaluate(p)
    e = np.exp(-np.sum(p * p, axis=-1))
    grad_psi = -2.0 * p * e[..., None]
    lap_psi = (4.0 * np.sum(p * p, axis=-1) - 4.0) * e
    return -(lap_psi / s.b - np.sum(s.grad_b * grad_psi, axis=-1) / s.b**2)


def cmd_selfcheck(args) -> int:
    depth = DepthField("radial-gaussian-bump", (0.5, 1.0))
    cache_path = None
    if args.config:
        cfg = _load(args.config)
        depth = cfg.depth.field()
        cache_path = cfg.kernel_cache
    _validate_depth(depth)
    tmpdir = None
    if cache_path is None:
        tmpdir = tempfile.TemporaryDirectory()
        cache_path = os.path.join(tmpdir.name, "selfcheck.lakeknl")
    else:
        cache_path = cache_path + ".selfcheck"
    failed = 0
    t0 = time.perf_counter()
    try:
        for name, fn in _selfcheck_items(cache_path, depth):
            t = time.perf_counter()
            try:
                ok, info = fn()
            except Exception as exc:            # report and continue with the rest
                ok, info = False, f"{type(exc).__name__}: {exc}"
            failed += not ok
            print(f"{'PASS' if ok else 'FAIL'}  {name:<30s} {info}  ({time.perf_counter() - t:.1f}s)", flush=True)
    finally:
        if tmpdir is not None:
            tmpdir.cleanup()
        elif os.path.exists(cache_path):
            os.unlink(cache_path)
    print(f"selfcheck: {failed} failed, {time.perf_counter() - t0:.1f}s total")
    return EXIT_VALIDATION if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lakevortex", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    k = sub.add_parser("kernel", help="kernel table management")
    ksub = k.add_subparsers(dest="kernel_command", required=True)
    kb = ksub.add_parser("build", help="build (or verify) the cached kernel table")
    kb.add_argument("config")
    kb.set_defaults(func=cmd_kernel_build)
    r = sub.add_parser("run", help="single simulation with diagnostics")
    r.add_argument("config")
    r.set_defaults(func=cmd_run)
    s = sub.add_parser("sweep", help="mean-field convergence sweep over N")
    s.add_argument("config")
    s.add_argument("--N", required=True, help="comma-separated ascending list, e.g. 64,256,1024")
    s.set_defaults(func=cmd_sweep)
    c = sub.add_parser("selfcheck", help="fast invariant suite")
    c.add_argument("--config", default=None)
    c.set_defaults(func=cmd_selfcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _log(f"config error: {exc}")
        return EXIT_CONFIG
    except ValidationFailure as exc:
        _log(f"validation failure: {exc}")
        return EXIT_VALIDATION
    except (NonConvergence, CacheMismatch) as exc:
        _log(f"kernel build failed: {exc}")
        return EXIT_KERNEL
    except CollisionImminent as exc:
        _log(f"collision abort (partial output written): {exc}")
        return EXIT_COLLISION
    except SupportEscape as exc:
        _log(f"continuum support escape: {exc}")
        return EXIT_SUPPORT


if __name__ == "__main__":
    sys.exit(main())
