"""Experiment orchestration: kernel preparation, runs, sweeps, artifacts."""

from __future__ import annotations

import json
import math
import os
import platform
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .continuum import Omega0, evolve, quadrature_particles, sample_vortices
from .diagnostics import (DiagnosticsRecord, count_close_pairs, interaction_energy, modulated_energy,
                          moment_inertia, sobolev_distance, stream_of, total_energy_candidates)
from .dynamics import VortexEnsemble, default_dt, min_separation, simulate
from .elliptic import solve_lake_elliptic
from .kernel import KernelTable, load_or_build

CONSERVED_TOL = 1e-6
CONTINUUM_PER_VORTEX = 64


def atomic_write(path, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def prepare_table(cfg: ExperimentConfig, log=None) -> KernelTable:
    k = cfg.kernel
    return load_or_build(cfg.kernel_cache, cfg.depth.field(), cfg.grid.geometry(), k.m, log=log,
                         tol=k.tol, max_iter=k.max_iter, theta=k.theta)


def time_grid(cfg: ExperimentConfig, q0):
    """``(dt, sample_every, continuum_dt, sample_times)`` for a run.

    Without an explicit ``sample_every`` the sample spacing is
    ``sim.sample_interval`` and the particle step is shrunk to divide it, so
    every N in a sweep shares the same sample times.
    """
    sim = cfg.sim
    dt0 = sim.dt if sim.dt is not None else default_dt(q0)
    if sim.sample_every is not None:
        dt, every = dt0, sim.sample_every
        ds = dt * every
    else:
        ds = min(sim.sample_interval, sim.T) if sim.T > 0 else sim.sample_interval
        every = max(1, math.ceil(ds / dt0 - 1e-9))
        dt = ds / every
    nsamp = int(round(sim.T / ds)) if sim.T > 0 else 0
    dtc = ds / max(1, math.ceil(ds / cfg.continuum.dt - 1e-9))
    times = ds * np.arange(nsamp + 1)
    return dt, every, dtc, times


@dataclass
class Reference:
    """Continuum states (and their lake stream functions) at the sample times."""

    times: np.ndarray
    states: list
    streams: list
    kind: str


def continuum_reference(cfg: ExperimentConfig, table: KernelTable, times, M: int, alpha: float,
                        regime: str) -> Reference:
    depth, geometry = cfg.depth.field(), cfg.grid.geometry()
    c = cfg.continuum
    om = Omega0(c.omega0.family, c.omega0.radius, tuple(c.omega0.center))
    calpha = alpha if c.alpha is None else c.alpha
    start = quadrature_particles(om, M, calpha)
    kind = "lake" if regime == "physical" else "transport"
    dtc = _continuum_dt(times, c.dt)
    states = [start] + evolve(start, depth, geometry, dtc, times[1:], kind=kind) if len(times) > 1 else [start]
    streams = []
    psi = None
    for s in states:
        w = s.deposit(geometry)
        psi = solve_lake_elliptic(depth, geometry, w, psi0=psi, tol=cfg.kernel.tol)
        streams.append(stream_of(s, depth, geometry, table, psi))
    return Reference(np.asarray(times), states, streams, kind)


def _continuum_dt(times, dt):
    if len(times) < 2:
        return dt
    ds = times[1] - times[0]
    return ds / max(1, math.ceil(ds / dt - 1e-9))


@dataclass
class RunResult:
    record: DiagnosticsRecord
    trajectory: object
    summary: dict
    complete: bool = True
    error: Exception | None = field(default=None, repr=False)


def initial_positions(cfg: ExperimentConfig, N: int, table: KernelTable):
    sim = cfg.sim
    if sim.positions is not None and N == sim.N:
        return np.array(sim.positions, dtype=float)
    c = cfg.continuum.omega0
    om = Omega0(c.family, c.radius, tuple(c.center))
    return sample_vortices(om, N, sim.sampling, sim.seed, box=table.R)


def run_experiment(cfg: ExperimentConfig, table: KernelTable, N: int | None = None,
                   reference: Reference | None = None, log=None) -> RunResult:
    t_start = time.perf_counter()
    sim = cfg.sim
    N = sim.N if N is None else N
    depth, geometry = cfg.depth.field(), cfg.grid.geometry()
    alpha = sim.alpha_for(N)
    q0 = initial_positions(cfg, N, table)
    dt, every, _, times = time_grid(cfg, q0)
    if cfg.continuum.enabled and reference is None:
        M = cfg.continuum.M or CONTINUUM_PER_VORTEX * N
        reference = continuum_reference(cfg, table, times, M, alpha, sim.regime)

    diag = cfg.diagnostics
    eta = diag.eta if diag.eta is not None else 1.0 / max(N, 2)
    eps = diag.eps_close if diag.eps_close is not None else 1.0 / math.sqrt(N)
    b0 = depth.b(q0)
    record = DiagnosticsRecord(meta={"N": N, "regime": sim.regime, "alpha": alpha, "dt": dt,
                                     "sample_every": every, "grid": [geometry.n, geometry.L],
                                     "m": table.m, "seed": sim.seed, "eta": eta, "eps_close": eps})

    def on_sample(state):
        q = state.positions
        k = len(record.rows)
        E = interaction_energy(q, table, depth)
        e1, e2 = total_energy_candidates(q, table, depth, alpha, E)
        F = Hs = float("nan")
        if reference is not None:
            if not np.isclose(reference.times[k], state.time, rtol=0, atol=1e-9):
                raise RuntimeError("continuum reference is not aligned with the sample times")
            F = modulated_energy(q, reference.states[k], depth, geometry, table, E_N=E,
                                 stream=reference.streams[k]).total
            Hs = sobolev_distance(q, reference.states[k], geometry, diag.s, diag.cutoff)
        record.append(t=state.time, E_N=E, I_N=moment_inertia(q), Etot1=e1, Etot2=e2, F_b=F, Hs=Hs,
                      min_sep=min_separation(q) if N > 1 else float("nan"),
                      close_pairs=count_close_pairs(q, eps),
                      level_set_drift=float(np.max(np.abs(depth.b(q) - b0))))

    state = VortexEnsemble(q0, alpha, sim.regime)
    traj = simulate(state, table, depth, sim.T, dt, every, on_sample=on_sample)
    wall = time.perf_counter() - t_start
    summary = summarize(record, traj, wall)
    return RunResult(record, traj, summary, traj.complete, traj.error)


def _drift(x):
    x = np.asarray(x, dtype=float)
    return float(np.max(x) - np.min(x)) if len(x) else float("nan")


def summarize(record: DiagnosticsRecord, traj, wall: float) -> dict:
    E = record.column("E_N")
    d1, d2 = _drift(record.column("Etot1")), _drift(record.column("Etot2"))
    conserved = None
    if d1 <= CONSERVED_TOL and d2 >= 100 * max(d1, 1e-300) and not d2 <= CONSERVED_TOL:
        conserved = 1
    elif d2 <= CONSERVED_TOL and d1 >= 100 * max(d2, 1e-300) and not d1 <= CONSERVED_TOL:
        conserved = 2
    F = record.column("F_b")
    Hs = record.column("Hs")
    out = dict(record.meta)
    out.update({
        "complete": bool(traj.complete),
        "error": None if traj.error is None else str(traj.error),
        "samples": len(record.rows),
        "t_final": float(record.rows[-1]["t"]) if record.rows else 0.0,
        "E_N_0": float(E[0]) if len(E) else None,
        "E_N_relative_drift": _drift(E) / abs(E[0]) if len(E) and E[0] != 0 else _drift(E),
        "Etot1_drift": d1,
        "Etot2_drift": d2,
        "conserved_candidate": conserved,
        "F_b_0": _finite(F[0]) if len(F) else None,
        "F_b_final": _finite(F[-1]) if len(F) else None,
        "F_b_sup": _finite(np.max(F)) if len(F) and np.all(np.isfinite(F)) else None,
        "Hs_final": _finite(Hs[-1]) if len(Hs) else None,
        "level_set_drift_max": float(np.max(record.column("level_set_drift"))) if record.rows else 0.0,
        "wall_time": wall,
    })
    return out


def _finite(v):
    v = float(v)
    return v if math.isfinite(v) else None


# -- artifacts --------------------------------------------------------------

def manifest(cfg: ExperimentConfig, table: KernelTable) -> dict:
    import numba
    import scipy
    return {
        "config": cfg.model_dump(mode="json"),
        "depth_fingerprint": table.fingerprint.hex(),
        "kernel": {"n": table.geometry.n, "L": table.geometry.L, "m": table.m, "c0": table.c0},
        "versions": {"lakevortex": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__},
    }


def write_run(cfg: ExperimentConfig, table: KernelTable, result: RunResult) -> None:
    out = cfg.output_dir
    atomic_write(os.path.join(out, "diagnostics.csv"), result.record.to_csv())
    atomic_write(os.path.join(out, "manifest.json"), json.dumps(manifest(cfg, table), indent=2) + "\n")
    atomic_write(os.path.join(out, "summary.json"), json.dumps(result.summary, indent=2) + "\n")


SWEEP_COLUMNS = ("N", "F_b_0", "F_b_sup", "F_b_T", "Hs_T", "E_N_0", "wall_time", "complete")


def run_sweep(cfg: ExperimentConfig, table: KernelTable, N_list, log=None):
    """One run per N sharing a single continuum reference resolved for the largest N."""
    N_list = [int(n) for n in N_list]
    rows = []
    reference = None
    t0 = time.perf_counter()
    if cfg.continuum.enabled:
        q0 = initial_positions(cfg, max(N_list), table)
        _, _, _, times = time_grid(cfg, q0)
        M = cfg.continuum.M or CONTINUUM_PER_VORTEX * max(N_list)
        # the forcing parameter of the reference must not depend on N
        alpha = cfg.continuum.alpha if cfg.continuum.alpha is not None else cfg.sim.alpha_for(max(N_list))
        reference = continuum_reference(cfg, table, times, M, alpha, cfg.sim.regime)
        if log:
            log(f"continuum reference (M={M}) ready in {time.perf_counter() - t0:.1f}s")
    results = []
    for N in N_list:
        res = run_experiment(cfg, table, N, reference)
        results.append(res)
        s = res.summary
        F = res.record.column("F_b")
        rows.append({"N": N, "F_b_0": s["F_b_0"], "F_b_sup": s["F_b_sup"],
                     "F_b_T": _finite(F[-1]) if len(F) else None, "Hs_T": s["Hs_final"],
                     "E_N_0": s["E_N_0"], "wall_time": s["wall_time"], "complete": s["complete"]})
        if log:
            log(f"N={N}: sup F_b={s['F_b_sup']}, Hs(T)={s['Hs_final']}, {s['wall_time']:.1f}s")
        if not res.complete:
            break
    return rows, results, reference


def sweep_csv(rows) -> str:
    lines = [",".join(SWEEP_COLUMNS)]
    for r in rows:
        vals = []
        for k in SWEEP_COLUMNS:
            v = r[k]
            if v is None:
                vals.append("nan")
            elif isinstance(v, bool):
                vals.append(str(int(v)))
            elif isinstance(v, int):
                vals.append(str(v))
            else:
                vals.append("%.17g" % v)
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"
