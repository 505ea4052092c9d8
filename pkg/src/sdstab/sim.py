"""Euler-Maruyama simulation of sampled-data loops and impulsive systems.

Noise is generated from counter-based Philox streams keyed by
(master seed, path index), so every path's increments are reproducible
independently of chunking, worker count, or execution order.  Sampling
instants are knots of the integration grid: local substeps shrink so each
instant is hit exactly and the zero-order-hold input switches at the instant,
never inside a step.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import CallbackError, DegenerateEnsemble, DomainError, ValidationError
from .models import GeneralSiDE, Model, SamplingSchedule, Segment, schedule_instants

_MASK64 = (1 << 64) - 1
_SCHEDULE_STREAM = 1 << 63
_JUMP_STREAM = 1 << 62
_DIVERGENCE_CAP = 1e150
_CHUNK = 4096


def _path_generator(seed: int, stream: int) -> np.random.Generator:
    key = np.array([int(seed) & _MASK64, int(stream) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo run configuration.

    dt_sim is the EM substep ceiling; it must not exceed a tenth of the
    smallest sampling gap so the hold dynamics are resolved.
    """

    schedule: SamplingSchedule
    horizon: float
    dt_sim: float
    n_paths: int = 1
    seed: int = 0
    store_stride: int = 1
    x0: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValidationError("horizon must be positive")
        if not self.dt_sim > 0:
            raise ValidationError("dt_sim must be positive")
        if self.n_paths < 1 or self.store_stride < 1:
            raise ValidationError("n_paths and store_stride must be >= 1")
        limit = self.schedule.underline_dt / 10.0
        if self.dt_sim > limit * (1.0 + 1e-12):
            raise ValidationError(
                f"dt_sim={self.dt_sim} must be <= underline_dt/10 = {limit:g}"
            )


@dataclass(frozen=True)
class _Grid:
    times: np.ndarray    # (N+1,) integration grid, t[0] = 0
    steps: np.ndarray    # (N,) local substeps
    refresh: np.ndarray  # (N,) True where the step starts at a sampling instant
    instants: np.ndarray


def _build_grid(instants: np.ndarray, horizon: float, dt_sim: float) -> _Grid:
    knots = list(instants)
    if horizon > knots[-1] + 1e-15:
        knots.append(horizon)
    instant_count = len(instants)
    times = [0.0]
    knot_pos = [0]
    for k in range(len(knots) - 1):
        a, b = knots[k], knots[k + 1]
        nsub = max(1, int(math.ceil((b - a) / dt_sim - 1e-9)))
        h = (b - a) / nsub
        seg = a + h * np.arange(1, nsub + 1)
        seg[-1] = b
        times.extend(seg.tolist())
        knot_pos.append(len(times) - 1)
    t = np.asarray(times)
    steps = np.diff(t)
    refresh = np.zeros(len(steps), dtype=bool)
    for k in range(instant_count):
        if knot_pos[k] < len(steps):
            refresh[knot_pos[k]] = True
    return _Grid(times=t, steps=steps, refresh=refresh, instants=np.asarray(instants))


@dataclass(frozen=True)
class SinglePath:
    times: np.ndarray
    states: np.ndarray        # (T, n)
    held: np.ndarray          # (T, n) value of x(t_*) active at each stored time
    instants: np.ndarray
    diverged: bool
    diverged_at: float


@dataclass(frozen=True)
class TrajectoryEnsemble:
    """Seeded Monte Carlo paths on a shared stored time grid."""

    times: np.ndarray          # (T,)
    states: np.ndarray         # (n_paths, T, n); NaN after divergence
    alive: np.ndarray          # (n_paths, T) bool
    instants: np.ndarray
    seed: int
    diverged_at: np.ndarray    # (n_paths,) time of divergence, NaN if none

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def n(self) -> int:
        return self.states.shape[2]

    @property
    def diverged(self) -> np.ndarray:
        return ~np.isnan(self.diverged_at)

    @property
    def n_diverged(self) -> int:
        return int(self.diverged.sum())

    def mean_sq(self) -> np.ndarray:
        """Mean of |x(t)|^2 over alive paths (NaN where no path is alive).

        The reduction is a fixed-order sum over path index, so the result is
        independent of how paths were chunked across workers.
        """
        sq = np.einsum("pti,pti->pt", np.nan_to_num(self.states), np.nan_to_num(self.states))
        counts = self.alive.sum(axis=0).astype(float)
        tot = np.where(self.alive, sq, 0.0).sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(counts > 0, tot / counts, np.nan)

    def n_alive(self) -> np.ndarray:
        return self.alive.sum(axis=0)


def _resolve_x0(model: Model, cfg: SimConfig) -> np.ndarray:
    if cfg.x0 is not None:
        x0 = np.asarray(cfg.x0, dtype=float)
    elif model.x0 is not None:
        x0 = np.asarray(model.x0, dtype=float)
    else:
        raise DomainError("no initial state: set x0 on the model or the config")
    if x0.shape != (model.n,):
        raise DomainError(f"x0 must have length {model.n}")
    return x0


def _integrate_chunk(model, b_bar, grid, x0, path_indices, seed, store_idx, capture_held=False):
    npaths = len(path_indices)
    n, m = model.n, model.m
    nsteps = len(grid.steps)
    noise = None
    if m > 0:
        noise = np.empty((npaths, nsteps, m))
        for row, p in enumerate(path_indices):
            noise[row] = _path_generator(seed, p).standard_normal((nsteps, m))
    x = np.tile(x0, (npaths, 1)).astype(float)
    xstar = x.copy()
    alive = np.ones(npaths, dtype=bool)
    diverged_at = np.full(npaths, np.nan)
    nstore = len(store_idx)
    states = np.full((npaths, nstore, n), np.nan)
    alive_store = np.zeros((npaths, nstore), dtype=bool)
    held = np.full((nstore, n), np.nan) if capture_held else None
    store_map = {int(g): s for s, g in enumerate(store_idx)}
    gts = [g.T for g in model.diffusion]
    sqrt_h = np.sqrt(grid.steps)

    def record(i):
        s = store_map.get(i)
        if s is None:
            return
        states[:, s, :] = x
        alive_store[:, s] = alive
        if held is not None:
            held[s] = xstar[0]

    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(nsteps):
            if grid.refresh[i]:
                xstar = x.copy()
            record(i)
            h = grid.steps[i]
            upd = (model.drift(x) + xstar @ b_bar.T) * h
            if m > 0:
                db = sqrt_h[i] * noise[:, i, :]
                for j, gt in enumerate(gts):
                    upd += (x @ gt) * db[:, j:j + 1]
            x = x + upd
            with np.errstate(invalid="ignore"):
                finite = np.all(np.isfinite(x), axis=1)
                small = np.nanmax(np.abs(x), axis=1, initial=0.0) <= _DIVERGENCE_CAP
            bad = alive & ~(finite & small)
            if bad.any():
                alive[bad] = False
                diverged_at[bad] = grid.times[i + 1]
                x[bad] = np.nan
        record(nsteps)
    return states, alive_store, diverged_at, held


def _store_indices(n_grid_points: int, stride: int) -> np.ndarray:
    idx = list(range(0, n_grid_points, stride))
    if idx[-1] != n_grid_points - 1:
        idx.append(n_grid_points - 1)
    return np.asarray(idx, dtype=int)


def run_ensemble(model: Model, cfg: SimConfig, workers: int = 1) -> TrajectoryEnsemble:
    """Simulate n_paths sampled-data trajectories with independent noise streams.

    The result is bit-identical for any worker count: chunking only changes
    which thread fills which rows.
    """
    b_bar = model.B_bar
    if b_bar is None:
        raise ValidationError("model gain is unresolved; synthesize or supply K_hat first")
    instants = schedule_instants(
        cfg.schedule, cfg.horizon, rng=_path_generator(cfg.seed, _SCHEDULE_STREAM)
    )
    grid = _build_grid(instants, cfg.horizon, cfg.dt_sim)
    x0 = _resolve_x0(model, cfg)
    store_idx = _store_indices(len(grid.times), cfg.store_stride)

    # fixed chunk size: worker count must not influence batch shapes, or
    # BLAS shape dispatch could perturb low-order bits across worker counts
    all_paths = np.arange(cfg.n_paths)
    chunk = min(_CHUNK, cfg.n_paths)
    blocks = [all_paths[i:i + chunk] for i in range(0, cfg.n_paths, chunk)]

    def work(block):
        return _integrate_chunk(model, b_bar, grid, x0, block, cfg.seed, store_idx)

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, blocks))
    else:
        results = [work(b) for b in blocks]

    states = np.concatenate([r[0] for r in results], axis=0)
    alive = np.concatenate([r[1] for r in results], axis=0)
    diverged_at = np.concatenate([r[2] for r in results], axis=0)
    return TrajectoryEnsemble(
        times=grid.times[store_idx],
        states=states,
        alive=alive,
        instants=grid.instants,
        seed=cfg.seed,
        diverged_at=diverged_at,
    )


def simulate_sampled_path(model: Model, cfg: SimConfig, path_index: int = 0) -> SinglePath:
    """One trajectory of the sampled-data loop, identified by its path index.

    Equals row `path_index` of any ensemble run with the same seed and config.
    """
    b_bar = model.B_bar
    if b_bar is None:
        raise ValidationError("model gain is unresolved; synthesize or supply K_hat first")
    instants = schedule_instants(
        cfg.schedule, cfg.horizon, rng=_path_generator(cfg.seed, _SCHEDULE_STREAM)
    )
    grid = _build_grid(instants, cfg.horizon, cfg.dt_sim)
    x0 = _resolve_x0(model, cfg)
    store_idx = _store_indices(len(grid.times), cfg.store_stride)
    states, alive, diverged_at, held = _integrate_chunk(
        model, b_bar, grid, x0, [path_index], cfg.seed, store_idx, capture_held=True
    )
    return SinglePath(
        times=grid.times[store_idx],
        states=states[0],
        held=held,
        instants=grid.instants,
        diverged=bool(~np.isnan(diverged_at[0])),
        diverged_at=float(diverged_at[0]),
    )


def simulate_em_discrete(F, G_list, h: float, n_steps: int, x0, seed: int = 0) -> np.ndarray:
    """Discrete-time EM recursion X_k = X_{k-1} + F X_{k-1} h + sum_j G_j X_{k-1} dB_{j,k}.

    dB ~ N(0, h); h = 0 degenerates to the constant sequence.  Returns the
    full path, shape (n_steps + 1, n), bit-reproducible for a given seed.
    """
    if h < 0:
        raise DomainError("stepsize must be nonnegative")
    f = np.asarray(F, dtype=float)
    gs = [np.asarray(g, dtype=float) for g in G_list]
    x0 = np.asarray(x0, dtype=float)
    n = x0.shape[0]
    out = np.empty((n_steps + 1, n))
    out[0] = x0
    rng = _path_generator(seed, 0)
    scale = math.sqrt(h)
    for k in range(n_steps):
        db = scale * rng.standard_normal(len(gs)) if gs else ()
        nxt = out[k] + h * (f @ out[k])
        for j, g in enumerate(gs):
            nxt = nxt + (g @ out[k]) * db[j]
        out[k + 1] = nxt
    return out


def simulate_em_discrete_terminal(
    F, G_list, h: float, n_steps: int, x0, n_paths: int, seed: int = 0
) -> np.ndarray:
    """Terminal states X_N for a batch of EM paths, shape (n_paths, n).

    Paths use per-path Philox streams, so path p here equals
    simulate_em_discrete(..., seed=seed) with stream p.
    """
    f = np.asarray(F, dtype=float)
    gs = [np.asarray(g, dtype=float).T for g in G_list]
    x0 = np.asarray(x0, dtype=float)
    x = np.tile(x0, (n_paths, 1))
    m = len(gs)
    noise = np.empty((n_paths, n_steps, m)) if m else None
    for p in range(n_paths):
        if m:
            noise[p] = _path_generator(seed, p).standard_normal((n_steps, m))
    scale = math.sqrt(h)
    for k in range(n_steps):
        nxt = x + h * (x @ f.T)
        if m:
            db = scale * noise[:, k, :]
            for j, gt in enumerate(gs):
                nxt = nxt + (x @ gt) * db[:, j:j + 1]
        x = nxt
    return x


@dataclass(frozen=True)
class SidePath:
    times: np.ndarray
    x: np.ndarray   # (T, n), continuous across impulses
    y: np.ndarray   # (T, q), right-continuous: post-jump value at each instant
    instants: np.ndarray


def simulate_side(side: GeneralSiDE, cfg: SimConfig, path_index: int = 0) -> SidePath:
    """Integrate a general impulsive system with callback dynamics.

    Between impulses both blocks follow EM driven by one shared Brownian
    vector; at each instant t_k the cyber block jumps by
    h_f(segment, k) [+ h_g(segment, k) @ xi_k], where the segment is the
    trajectory recorded on the integration grid since the previous impulse.
    Jump noise xi_k comes from a dedicated stream so the Brownian increments
    match the sampled-data simulator draw for draw.
    """
    instants = schedule_instants(
        cfg.schedule, cfg.horizon, rng=_path_generator(cfg.seed, _SCHEDULE_STREAM)
    )
    grid = _build_grid(instants, cfg.horizon, cfg.dt_sim)
    nsteps = len(grid.steps)
    if cfg.x0 is not None:
        x = np.asarray(cfg.x0, dtype=float).copy()
    elif side.x0 is not None:
        x = np.array(side.x0, dtype=float)
    else:
        raise DomainError("no initial state: set x0 on the system or the config")
    y = np.array(side.y0 if side.y0 is not None else np.zeros(side.q), dtype=float)
    rng = _path_generator(cfg.seed, path_index)
    noise = rng.standard_normal((nsteps, side.m)) if side.m > 0 else None
    jump_rng = _path_generator(cfg.seed, path_index + _JUMP_STREAM)

    store_idx = _store_indices(len(grid.times), cfg.store_stride)
    store_map = {int(g): s for s, g in enumerate(store_idx)}
    xs = np.full((len(store_idx), side.n), np.nan)
    ys = np.full((len(store_idx), side.q), np.nan)

    seg_t, seg_x, seg_y = [0.0], [x.copy()], [y.copy()]
    k_impulse = 0

    def record(i):
        s = store_map.get(i)
        if s is not None:
            xs[s], ys[s] = x, y

    for i in range(nsteps + 1):
        t = grid.times[i]
        if i > 0:
            seg_t.append(t)
            seg_x.append(x.copy())
            seg_y.append(y.copy())
        at_instant = (0 < i < nsteps and grid.refresh[i]) or (i == nsteps and _ends_on_instant(grid))
        if at_instant:
            k_impulse += 1
            seg = Segment(t=np.asarray(seg_t), x=np.asarray(seg_x), y=np.asarray(seg_y))
            try:
                delta = np.asarray(side.h_f(seg, k_impulse), dtype=float)
                if side.h_g is not None:
                    hg = np.asarray(side.h_g(seg, k_impulse), dtype=float)
                    delta = delta + hg @ jump_rng.standard_normal(side.n)
            except CallbackError:
                raise
            except Exception as exc:  # noqa: BLE001 - callback contract
                raise CallbackError(f"jump map failed at t={t}: {exc}") from exc
            y = y + delta
            seg_t, seg_x, seg_y = [t], [x.copy()], [y.copy()]
        record(i)
        if i == nsteps:
            break
        h = grid.steps[i]
        try:
            fx = np.asarray(side.f(x, y, t), dtype=float)
            fy = np.asarray(side.f_tilde(x, y, t), dtype=float)
            if side.m > 0:
                db = math.sqrt(h) * noise[i]
                gx = np.asarray(side.g(x, y, t), dtype=float) @ db
                gy = np.asarray(side.g_tilde(x, y, t), dtype=float) @ db
            else:
                gx = 0.0
                gy = 0.0
        except CallbackError:
            raise
        except Exception as exc:  # noqa: BLE001 - callback contract
            raise CallbackError(f"dynamics callback failed at t={t}: {exc}") from exc
        x = x + fx * h + gx
        y = y + fy * h + gy
    return SidePath(times=grid.times[store_idx], x=xs, y=ys, instants=grid.instants)


def _ends_on_instant(grid: _Grid) -> bool:
    return len(grid.instants) > 1 and grid.times[-1] == grid.instants[-1]


# ---------------------------------------------------------------------------
# decay estimators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecayEstimate:
    """Least-squares fit of ln E|x(t)|^2 against t on a window."""

    rate: float
    intercept: float
    r_squared: float
    window: Tuple[float, float]
    n_points: int

    @property
    def decay_confirmed(self) -> bool:
        return self.rate < 0.0 and self.r_squared >= 0.9


def estimate_ms_decay(
    ens: TrajectoryEnsemble, window: Optional[Tuple[float, float]] = None
) -> DecayEstimate:
    """Fit the mean-square decay rate on a time window (default [0.2 T, T]).

    Requires at least 10 stored grid points in the window and strictly
    positive empirical means everywhere on it.
    """
    t = ens.times
    horizon = float(t[-1])
    if window is None:
        window = (0.2 * horizon, horizon)
    w0, w1 = window
    if not (0.0 <= w0 < w1 <= horizon * (1 + 1e-12)):
        raise DomainError(f"window {window} must sit inside [0, {horizon}]")
    sel = (t >= w0) & (t <= w1)
    if int(sel.sum()) < 10:
        raise DegenerateEnsemble(f"only {int(sel.sum())} grid points in window; need >= 10")
    means = ens.mean_sq()[sel]
    if not np.all(np.isfinite(means)) or np.any(means <= 0.0):
        raise DegenerateEnsemble("ensemble means are zero, negative, or undefined on the window")
    tt = t[sel]
    ln = np.log(means)
    slope, intercept = np.polyfit(tt, ln, 1)
    resid = ln - (slope * tt + intercept)
    ss_res = float(resid @ resid)
    centered = ln - ln.mean()
    ss_tot = float(centered @ centered)
    r2 = 1.0 if ss_tot == 0.0 and ss_res == 0.0 else 1.0 - ss_res / ss_tot
    return DecayEstimate(
        rate=float(slope), intercept=float(intercept), r_squared=float(r2),
        window=(float(w0), float(w1)), n_points=int(sel.sum()),
    )


@dataclass(frozen=True)
class ExponentSummary:
    """Per-path (1/t) ln |x(t)| at the window end, with median/max summaries.

    Paths at exactly zero carry -inf; they are excluded from the median and
    counted in n_zero.  Diverged paths are excluded and counted separately.
    """

    values: np.ndarray
    t_used: float
    median: float
    max: float
    n_zero: int
    n_diverged: int


def estimate_as_exponent(
    ens: TrajectoryEnsemble, window: Optional[Tuple[float, float]] = None
) -> ExponentSummary:
    t = ens.times
    w1 = float(t[-1]) if window is None else float(window[1])
    if not w1 > 0:
        raise DomainError("window end must be positive")
    candidates = np.nonzero((t <= w1 * (1 + 1e-12)) & (t > 0))[0]
    if len(candidates) == 0:
        raise DomainError("no positive stored time inside the window")
    i = int(candidates[-1])
    t_used = float(t[i])
    alive = ens.alive[:, i]
    norms = np.linalg.norm(np.nan_to_num(ens.states[:, i, :]), axis=1)
    with np.errstate(divide="ignore"):
        vals = np.where(alive, np.log(np.where(norms > 0, norms, 1.0)) / t_used, np.nan)
        vals = np.where(alive & (norms == 0.0), -np.inf, vals)
    finite = vals[np.isfinite(vals)]
    if finite.size == 0:
        raise DegenerateEnsemble("no path with a finite exponent")
    considered = vals[alive]
    return ExponentSummary(
        values=vals,
        t_used=t_used,
        median=float(np.median(finite)),
        max=float(np.max(considered)),
        n_zero=int(np.sum(alive & (norms == 0.0))),
        n_diverged=int((~alive).sum()),
    )


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------

def export_trajectories_csv(ens: TrajectoryEnsemble, path) -> None:
    """Write per-path trajectories: header t,path,x1..xn."""
    n = ens.n
    header = "t,path," + ",".join(f"x{i + 1}" for i in range(n))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for p in range(ens.n_paths):
            for i, t in enumerate(ens.times):
                coords = ",".join(repr(float(v)) for v in ens.states[p, i])
                fh.write(f"{float(t)!r},{p},{coords}\n")


def export_ensemble_stats_csv(ens: TrajectoryEnsemble, path) -> None:
    """Write ensemble statistics: header t,mean_sq_norm,n_alive."""
    means = ens.mean_sq()
    alive = ens.n_alive()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,mean_sq_norm,n_alive\n")
        for i, t in enumerate(ens.times):
            fh.write(f"{float(t)!r},{float(means[i])!r},{int(alive[i])}\n")
