"""Comparison harness: sup-norm deviation between scaled paths and their
deterministic limits, steady-state estimation by batch means, Gaussian moment
checks, and the deviation-vs-scale sweep.

Steady-state averages are time-weighted (a sampled CTMC state holds its value
until the next sample), never event-weighted.  Every report carries enough
context (seed, parameters, grid) to rerun it exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .ctmc import RandomStream, SystemState, fluid_scale, diffusion_scale, simulate_b, \
    transition_rates_b, drift_replicates_b, GridSpec
from .fluid import solve_fluid
from .params import InviteSimError, ModelParams


class StatsError(InviteSimError):
    pass


class GridOutsideHorizon(StatsError):
    pass


class InsufficientData(StatsError):
    pass


# ---------------------------------------------------------------------------
# sup-norm deviation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeviationReport:
    sup: float
    t_at_sup: float
    component_max: tuple[float, float]
    grid_start: float
    grid_end: float
    grid_points: int
    context: dict = field(default_factory=dict, compare=False)

    def to_json_dict(self) -> dict:
        return {
            "sup": self.sup,
            "t_at_sup": self.t_at_sup,
            "component_max": list(self.component_max),
            "grid": {"start": self.grid_start, "end": self.grid_end,
                     "points": self.grid_points},
            "context": self.context,
        }


def _horizon_of(traj) -> float:
    h = getattr(traj, "horizon", None)
    if h is not None:
        return float(h)
    return float(traj.t[-1])


def sup_deviation(scaled_sim, reference, grid, context: dict | None = None) -> DeviationReport:
    """Max over the grid of the max-norm difference between two paths.

    Symmetric in its two arguments; both must expose eval_on(grid) -> (n, 2).
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise GridOutsideHorizon("empty evaluation grid")
    for traj in (scaled_sim, reference):
        if grid.min() < -1e-9 or grid.max() > _horizon_of(traj) * (1 + 1e-9) + 1e-9:
            raise GridOutsideHorizon(
                f"grid [{grid.min()}, {grid.max()}] exceeds a horizon of "
                f"{_horizon_of(traj)}")
    diff = np.abs(np.asarray(scaled_sim.eval_on(grid))
                  - np.asarray(reference.eval_on(grid)))
    per_point = diff.max(axis=1)
    k = int(per_point.argmax())
    return DeviationReport(
        sup=float(per_point[k]),
        t_at_sup=float(grid[k]),
        component_max=(float(diff[:, 0].max()), float(diff[:, 1].max())),
        grid_start=float(grid[0]),
        grid_end=float(grid[-1]),
        grid_points=int(grid.size),
        context=context or {},
    )


# ---------------------------------------------------------------------------
# batch means
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StationaryEstimate:
    mean: np.ndarray
    cov: np.ndarray
    mean_halfwidth: np.ndarray
    cov_halfwidth: np.ndarray
    skew_y: float
    skew_halfwidth: float
    exkurt_y: float
    exkurt_halfwidth: float
    n_batches: int
    batch_len: float
    burn_in: float
    horizon: float
    context: dict = field(default_factory=dict, compare=False)

    def to_json_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "cov": self.cov.tolist(),
            "mean_halfwidth": self.mean_halfwidth.tolist(),
            "cov_halfwidth": self.cov_halfwidth.tolist(),
            "skew_y": self.skew_y, "skew_halfwidth": self.skew_halfwidth,
            "exkurt_y": self.exkurt_y, "exkurt_halfwidth": self.exkurt_halfwidth,
            "n_batches": self.n_batches, "batch_len": self.batch_len,
            "burn_in": self.burn_in, "horizon": self.horizon,
            "context": self.context,
        }


def _as_series(series):
    if isinstance(series, tuple):
        t, v = series
        t = np.asarray(t, dtype=float)
        v = np.asarray(v, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        return t, v
    # trajectory-like: t plus y/x columns
    t = np.asarray(series.t, dtype=float)
    v = np.column_stack([np.asarray(series.y, dtype=float),
                         np.asarray(series.x, dtype=float)])
    return t, v


def _window_integrals(t, v, edges):
    """Integrals of the piecewise-constant hold interpolant of (t, v) over
    consecutive windows [edges[j], edges[j+1])."""
    # cumulative integral at sample times; linear interpolation of the
    # cumulative is exact for a piecewise-constant integrand
    dt = np.diff(t)
    cum = np.vstack([np.zeros((1, v.shape[1])),
                     np.cumsum(v[:-1] * dt[:, None], axis=0)])
    at_edges = np.empty((len(edges), v.shape[1]))
    for j in range(v.shape[1]):
        at_edges[:, j] = np.interp(edges, t, cum[:, j])
    return np.diff(at_edges, axis=0)


def batch_means(series, burn_in: float, n_batches: int = 20,
                context: dict | None = None) -> StationaryEstimate:
    """Steady-state estimate from equal-time batches after a burn-in.

    The batch spread feeds 95% half-widths for every reported quantity.
    Covariance and the shape moments of the first component are computed per
    batch around the global mean, so their across-batch averages equal the
    full-window time averages (and the covariance stays PSD).
    """
    t, v = _as_series(series)
    if n_batches < 10:
        raise InsufficientData(f"need at least 10 batches, got {n_batches}")
    if len(t) < 2 * n_batches:
        raise InsufficientData(f"only {len(t)} samples for {n_batches} batches")
    t0, t1 = float(t[0]), float(t[-1])
    if burn_in < t0 - 1e-12 or t1 - burn_in <= 0.0:
        raise InsufficientData(
            f"burn-in {burn_in} leaves no window inside [{t0}, {t1}]")
    edges = np.linspace(burn_in, t1, n_batches + 1)
    blen = edges[1] - edges[0]

    # integrating v - v[0] keeps an exactly-constant series exactly constant
    # through the cumsum round-off
    shift = v[0].copy()
    means_b = _window_integrals(t, v - shift, edges) / blen + shift
    mean = means_b.mean(axis=0)

    d = v - mean
    prods = np.column_stack([d[:, i] * d[:, j]
                             for i in range(v.shape[1]) for j in range(v.shape[1])])
    cov_b = _window_integrals(t, prods, edges) / blen
    cov = cov_b.mean(axis=0).reshape(v.shape[1], v.shape[1])
    cov = 0.5 * (cov + cov.T)

    z95 = 1.959963984540054
    def hw(rows):
        if n_batches < 2:
            return np.zeros(rows.shape[1])
        return z95 * rows.std(axis=0, ddof=1) / math.sqrt(n_batches)

    mean_hw = hw(means_b)
    cov_hw = hw(cov_b).reshape(v.shape[1], v.shape[1])
    cov_hw = 0.5 * (cov_hw + cov_hw.T)

    sigma = math.sqrt(max(cov[0, 0], 0.0))
    shape = np.column_stack([d[:, 0] ** 3, d[:, 0] ** 4])
    shape_b = _window_integrals(t, shape, edges) / blen
    if sigma > 0.0:
        skew_b = shape_b[:, 0] / sigma ** 3
        kurt_b = shape_b[:, 1] / sigma ** 4 - 3.0
    else:
        skew_b = np.zeros(n_batches)
        kurt_b = np.zeros(n_batches)
    skew_hw, kurt_hw = hw(np.column_stack([skew_b, kurt_b]))

    return StationaryEstimate(
        mean=mean, cov=cov, mean_halfwidth=mean_hw, cov_halfwidth=cov_hw,
        skew_y=float(skew_b.mean()), skew_halfwidth=float(skew_hw),
        exkurt_y=float(kurt_b.mean()), exkurt_halfwidth=float(kurt_hw),
        n_batches=n_batches, batch_len=float(blen), burn_in=float(burn_in),
        horizon=t1, context=context or {})


def stationary_moments(traj, params: ModelParams | None = None,
                       burn_in: float = 100.0, n_batches: int = 20) -> StationaryEstimate:
    """Diffusion-scale steady-state moments of a constant-rate run."""
    if getattr(traj, "time_varying", False):
        raise StatsError("steady-state estimation needs a constant arrival rate")
    params = params or traj.params
    scaled = diffusion_scale(traj, params)
    ctx = {
        "scheme": traj.scheme,
        "seed": traj.stream.seed,
        "stream_path": list(traj.stream.path),
        "scale_r": params.scale_r,
        "horizon": traj.horizon,
        "grid_dt": traj.grid_dt,
        "burn_in": burn_in,
        "n_batches": n_batches,
    }
    return batch_means((scaled.t, np.column_stack([scaled.y, scaled.x])),
                       burn_in=burn_in, n_batches=n_batches, context=ctx)


# ---------------------------------------------------------------------------
# Gaussian moment check
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianTolerances:
    mean_abs: float = 0.02
    cov_rel: float = 0.10
    skew_abs: float = 0.10
    exkurt_abs: float = 0.20


@dataclass(frozen=True)
class CheckEntry:
    name: str
    estimate: float
    reference: float
    tolerance: float
    halfwidth: float
    z: float
    ok: bool


@dataclass(frozen=True)
class GaussianCheckReport:
    passed: bool
    entries: tuple[CheckEntry, ...]
    scale_r: float | None
    context: dict = field(default_factory=dict, compare=False)

    def to_json_dict(self) -> dict:
        return {
            "passed": self.passed,
            "scale_r": self.scale_r,
            "entries": [e.__dict__ for e in self.entries],
            "context": self.context,
        }


def gaussian_check(est: StationaryEstimate, params: ModelParams,
                   tolerances: GaussianTolerances | None = None) -> GaussianCheckReport:
    """Entrywise comparison to the Gaussian limit: mean (0,0), the closed-form
    stationary covariance, and Gaussian shape moments of the first component.

    An entry passes when |estimate - reference| <= tolerance + CI half-width;
    pre-asymptotic scales therefore show up as failed entries, not errors.
    """
    from .diffusion import stationary_covariance

    tol = tolerances or GaussianTolerances()
    ref_cov = stationary_covariance(params)
    entries = []

    def add(name, estv, refv, tolv, hwv):
        dev = abs(estv - refv)
        z = dev / max(hwv / 1.959963984540054, 1e-30)
        entries.append(CheckEntry(name=name, estimate=float(estv), reference=float(refv),
                                  tolerance=float(tolv), halfwidth=float(hwv),
                                  z=float(z), ok=bool(dev <= tolv + hwv)))

    names = ("y", "x")
    for i in range(2):
        add(f"mean_{names[i]}", est.mean[i], 0.0, tol.mean_abs, est.mean_halfwidth[i])
    for i in range(2):
        for j in range(i, 2):
            add(f"cov_{names[i]}{names[j]}", est.cov[i, j], ref_cov[i, j],
                tol.cov_rel * abs(ref_cov[i, j]), est.cov_halfwidth[i, j])
    add("skew_y", est.skew_y, 0.0, tol.skew_abs, est.skew_halfwidth)
    add("exkurt_y", est.exkurt_y, 0.0, tol.exkurt_abs, est.exkurt_halfwidth)

    return GaussianCheckReport(
        passed=all(e.ok for e in entries),
        entries=tuple(entries),
        scale_r=est.context.get("scale_r"),
        context=dict(est.context),
    )


# ---------------------------------------------------------------------------
# deviation vs scale
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    r: float
    mean_dev: float
    std_dev: float
    n: int


@dataclass(frozen=True)
class SweepTable:
    rows: tuple[SweepRow, ...]
    monotone_decreasing: bool
    context: dict = field(default_factory=dict, compare=False)

    def loglog_slope(self) -> float:
        xs = np.log([row.r for row in self.rows])
        ys = np.log([row.mean_dev for row in self.rows])
        return float(np.polyfit(xs, ys, 1)[0])

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("r,mean_dev,std_dev,n\n")
            for row in self.rows:
                sd = "" if math.isnan(row.std_dev) else f"{row.std_dev:.12g}"
                fh.write(f"{row.r:.10g},{row.mean_dev:.12g},{sd},{row.n}\n")


def scale_sweep(r_list, initial_family, params: ModelParams, horizon: float,
                replications: int, stream: RandomStream,
                grid_dt: float = 0.05, map_fn=None) -> SweepTable:
    """Mean/std of the fluid-scale sup deviation at each scale in r_list.

    initial_family maps a scale r to the unscaled integer initial state, so
    the whole family shares one scaled starting point and one fluid
    reference.  Replication j at scale index i uses stream.child(i).child(j).
    map_fn lets callers fan replications out to a worker pool; streams are
    assigned up front and results collected in order, so the table is
    identical no matter how the work is scheduled.
    """
    r_list = list(r_list)
    if any(b <= a for a, b in zip(r_list, r_list[1:])):
        raise StatsError("r_list must be strictly increasing")
    if replications < 1:
        raise StatsError("need at least one replication")
    grid = np.arange(0.0, horizon * (1 + 1e-12), grid_dt)
    rows = []
    for i, r in enumerate(r_list):
        p = replace(params, scale_r=float(r))
        init = initial_family(r)
        if not isinstance(init, SystemState):
            init = SystemState(y=int(init[0]), x=int(init[1]))
        scaled0 = (init.y / r, init.x / r - p.lam / p.beta)
        reference = solve_fluid(scaled0, p, horizon=horizon)

        def one_replicate(j, _i=i, _p=p, _init=init, _ref=reference):
            traj = simulate_b(_init, _p, horizon=horizon,
                              stream=stream.child(_i).child(j),
                              sampling=GridSpec(dt=grid_dt))
            return sup_deviation(fluid_scale(traj, _p), _ref, grid).sup

        devs = np.array(list((map_fn or map)(one_replicate,
                                             range(replications))))
        rows.append(SweepRow(
            r=float(r), mean_dev=float(devs.mean()),
            std_dev=float(devs.std(ddof=1)) if replications >= 2 else float("nan"),
            n=replications))
    mono = all(b.mean_dev < a.mean_dev for a, b in zip(rows, rows[1:]))
    return SweepTable(rows=tuple(rows), monotone_decreasing=mono,
                      context={"seed": stream.seed, "stream_path": list(stream.path),
                               "horizon": horizon, "grid_dt": grid_dt,
                               "replications": replications})


# ---------------------------------------------------------------------------
# generator audit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DriftRow:
    state: tuple[int, int]
    expected: tuple[float, float]
    empirical: tuple[float, float]
    se: tuple[float, float]
    z: tuple[float, float]


@dataclass(frozen=True)
class GeneratorDriftReport:
    rows: tuple[DriftRow, ...]
    max_abs_z: float
    dt: float
    n_replicates: int
    context: dict = field(default_factory=dict, compare=False)


def generator_drift_check(states, params: ModelParams, dt: float,
                          n_replicates: int, stream: RandomStream,
                          arrival=None) -> GeneratorDriftReport:
    """Short-window mean increments vs the rate-table prediction.

    For each starting state, E[delta] over a window of length dt is the rate
    table's sum of rate*jump*dt up to O(dt^2); the empirical mean over
    n_replicates is compared in standard-error units.
    """
    rows = []
    max_z = 0.0
    for k, st in enumerate(states):
        if not isinstance(st, SystemState):
            st = SystemState(y=int(st[0]), x=int(st[1]))
        exp_dy =exp_dx = 0.0
        for rate, dy, dx in transition_rates_b(st, params, arrival=arrival):
            exp_dy += rate * dy * dt
            exp_dx += rate * dx * dt
        deltas = drift_replicates_b(st, params, dt=dt, n_replicates=n_replicates,
                                    stream=stream.child(k), arrival=arrival)
        emp = deltas.mean(axis=0)
        se = deltas.std(axis=0, ddof=1) / math.sqrt(n_replicates)
        se = np.maximum(se, 1e-12)
        z = (emp - [exp_dy, exp_dx]) / se
        max_z = max(max_z, float(np.abs(z).max()))
        rows.append(DriftRow(
            state=(st.y, st.x),
            expected=(exp_dy, exp_dx),
            empirical=(float(emp[0]), float(emp[1])),
            se=(float(se[0]), float(se[1])),
            z=(float(z[0]), float(z[1]))))
    return GeneratorDriftReport(rows=tuple(rows), max_abs_z=max_z, dt=dt,
                                n_replicates=n_replicates,
                                context={"seed": stream.seed,
                                         "stream_path": list(stream.path)})
