"""Deterministic scaled limits: closed-form constant-rate solver and the
time-varying integrator.

Constant rate: away from the floor x = -lam/beta the path is a sum of two
decaying eigenmodes; on the floor it slides with y' = -lam until y reaches
gamma*lam/epsilon and lifts off.  A path enters the floor at most once, so a
full solution is at most interior/boundary/interior.

Time-varying rate: the uncentered pair (y, x) follows a piecewise-smooth field
with the same floor structure at x = 0; integration is classical fixed-step
4th order with the floor crossings located by bisection inside a step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import (
    ArrivalRateFn,
    ConstantArrival,
    InviteSimError,
    ModelParams,
    SpectralData,
    spectral_decompose,
    star_coords,
    validate_params,
)


class FluidSolverError(InviteSimError):
    pass


class InvalidInitial(FluidSolverError):
    pass


@dataclass(frozen=True)
class FluidState:
    y: float
    x: float

    def as_array(self) -> np.ndarray:
        return np.array([self.y, self.x])


@dataclass(frozen=True)
class InteriorSegment:
    t0: float
    duration: float
    alpha1: float
    alpha2: float
    kind: str = "interior"


@dataclass(frozen=True)
class BoundarySegment:
    t0: float
    duration: float
    y_start: float
    kind: str = "boundary"


@dataclass(frozen=True)
class FluidTrajectory:
    """Piecewise closed-form path of the centered fluid pair (y, x)."""

    params: ModelParams
    spec: SpectralData
    segments: tuple
    horizon: float

    @property
    def boundary_segments(self) -> int:
        return sum(1 for s in self.segments if isinstance(s, BoundarySegment))

    def states(self, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        if ts.size and (ts.min() < -1e-12 or ts.max() > self.horizon * (1 + 1e-12) + 1e-12):
            raise FluidSolverError(
                f"evaluation times outside [0, {self.horizon}]")
        starts = np.array([s.t0 for s in self.segments])
        idx = np.clip(np.searchsorted(starts, ts, side="right") - 1, 0, len(self.segments) - 1)
        out = np.empty((ts.size, 2))
        spec = self.spec
        lam, beta = self.params.lam, self.params.beta
        for i, seg in enumerate(self.segments):
            mask = idx == i
            if not mask.any():
                continue
            tau = ts[mask] - seg.t0
            if isinstance(seg, InteriorSegment):
                c1 = seg.alpha1 * np.exp(-spec.nu1 * tau)
                c2 = seg.alpha2 * np.exp(-spec.nu2 * tau)
                out[mask, 0] = c1 * spec.a1 + c2 * spec.a2
                out[mask, 1] = -(c1 + c2)
            else:
                out[mask, 0] = seg.y_start - lam * tau
                out[mask, 1] = -lam / beta
        return out

    def state(self, t: float) -> np.ndarray:
        return self.states(np.array([t]))[0]

    def segment_kinds(self, ts) -> list[str]:
        ts = np.asarray(ts, dtype=float)
        starts = np.array([s.t0 for s in self.segments])
        idx = np.clip(np.searchsorted(starts, ts, side="right") - 1, 0, len(self.segments) - 1)
        return [self.segments[i].kind for i in idx]

    def eval_on(self, grid: np.ndarray) -> np.ndarray:
        return self.states(grid)

    def segment_summary(self) -> list[dict]:
        out = []
        for s in self.segments:
            d = {"kind": s.kind, "t0": s.t0, "duration": s.duration}
            if isinstance(s, InteriorSegment):
                d["alpha1"] = s.alpha1
                d["alpha2"] = s.alpha2
            else:
                d["y_start"] = s.y_start
            out.append(d)
        return out

    def to_csv(self, path, dt: float = 0.05) -> None:
        n = int(math.floor(self.horizon / dt * (1 + 1e-12))) + 1
        ts = np.arange(n) * dt
        vals = self.states(ts) + 0.0  # drop negative zeros
        kinds = self.segment_kinds(ts)
        with open(path, "w") as fh:
            fh.write("t,y,x,segment_kind\n")
            for i in range(n):
                fh.write(f"{ts[i]:.10g},{vals[i, 0]:.12g},{vals[i, 1]:.12g},{kinds[i]}\n")


def interior_solution(initial, dt: float, spec: SpectralData) -> FluidState:
    """Closed-form interior propagation of (y, x) by elapsed time dt."""
    u = initial.as_array() if isinstance(initial, FluidState) else np.asarray(initial, dtype=float)
    al = star_coords(u, spec)
    c1 = al[0] * math.exp(-spec.nu1 * dt)
    c2 = al[1] * math.exp(-spec.nu2 * dt)
    return FluidState(y=c1 * spec.a1 + c2 * spec.a2, x=-(c1 + c2))


def boundary_hit_time(initial, params: ModelParams,
                      spec: SpectralData | None = None) -> float | None:
    """Smallest t > 0 where the interior closed form reaches x = -lam/beta.

    Scans sign changes of x(t) + lam/beta on a grid of step min(1/nu2, T)/64
    augmented with the single analytic critical point, then bisects to 1e-12.
    Returns None when the path stays above the floor.
    """
    if spec is None:
        spec = spectral_decompose(params)
    u = initial.as_array() if isinstance(initial, FluidState) else np.asarray(initial, dtype=float)
    al = star_coords(u, spec)
    a1, a2 = float(al[0]), float(al[1])
    nu1, nu2 = spec.nu1, spec.nu2
    level = params.lam / params.beta

    def gap(t):
        # x(t) + lam/beta; positive strictly inside the admissible region
        return level - a1 * math.exp(-nu1 * t) - a2 * math.exp(-nu2 * t)

    # starting on the floor with the flow still pushing in counts as an
    # immediate hit; gap'(0) < 0 is exactly y0 > gamma*lam/epsilon.  The
    # derivative threshold leaves exit-grazing restarts (gap'(0) ~ fp dust)
    # to the scan below, which treats them as interior.
    if (gap(0.0) <= 1e-12 * max(1.0, level)
            and nu1 * a1 + nu2 * a2 < -1e-9 * max(1.0, abs(a1) + abs(a2))):
        return 0.0

    reach = abs(a1) + abs(a2)
    if reach <= level * (1.0 - 1e-15):
        return None
    t_max = math.log(max(reach / level, 1.0)) / nu1 + 1.0 / nu2
    step = min(1.0 / nu2, t_max) / 64.0
    ts = list(np.arange(step, t_max + step, step))
    # at most one interior extremum of the gap; include it so a dip between
    # scan points cannot be missed
    if a1 != 0.0 and -nu2 * a2 / (nu1 * a1) > 0.0:
        t_crit = math.log(-nu2 * a2 / (nu1 * a1)) / (nu2 - nu1)
        if 0.0 < t_crit < t_max:
            ts = sorted(ts + [t_crit])

    prev_t, prev_g = 0.0, gap(0.0)
    bracket = None
    for t in ts:
        g = gap(t)
        if prev_g > 0.0 >= g:
            bracket = (prev_t, t)
            break
        prev_t, prev_g = t, g
    if bracket is None:
        return None
    lo, hi = bracket
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if gap(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def solve_fluid(initial, params: ModelParams, horizon: float) -> FluidTrajectory:
    """Exact constant-rate fluid path as at most interior/boundary/interior."""
    validate_params(params, scheme="A")
    if horizon <= 0.0:
        raise FluidSolverError(f"horizon must be > 0, got {horizon}")
    spec = spectral_decompose(params)
    if isinstance(initial, FluidState):
        y0, x0 = initial.y, initial.x
    else:
        y0, x0 = float(initial[0]), float(initial[1])
    floor = -params.lam / params.beta
    exit_y = params.boundary_exit_y
    tol = 1e-9 * max(1.0, abs(floor))
    if x0 < floor - tol:
        raise InvalidInitial(f"x={x0} below the floor {floor}")
    x0 = max(x0, floor)

    segments: list = []
    cursor = 0.0
    y, x = y0, x0
    on_floor = x <= floor + 1e-12 * max(1.0, abs(floor))
    mode = "boundary" if (on_floor and y > exit_y + 1e-12) else "interior"
    if on_floor:
        x = floor

    while cursor < horizon:
        remaining = horizon - cursor
        if len(segments) > 3:
            raise FluidSolverError("segment structure exceeded interior/boundary/interior")
        if mode == "interior":
            al = star_coords((y, x), spec)
            t_hit = boundary_hit_time(FluidState(y, x), params, spec)
            if t_hit is None or t_hit >= remaining:
                segments.append(InteriorSegment(t0=cursor, duration=remaining,
                                                alpha1=float(al[0]), alpha2=float(al[1])))
                cursor = horizon
                break
            segments.append(InteriorSegment(t0=cursor, duration=t_hit,
                                            alpha1=float(al[0]), alpha2=float(al[1])))
            hit = interior_solution(FluidState(y, x), t_hit, spec)
            cursor += t_hit
            y, x = hit.y, floor
            mode = "boundary" if y > exit_y + 1e-12 else "interior"
            if mode == "interior" and cursor < horizon:
                # grazing contact: the path touches the floor and lifts off
                y = min(y, exit_y)
        else:
            dur = (y - exit_y) / params.lam
            d = min(dur, remaining)
            segments.append(BoundarySegment(t0=cursor, duration=d, y_start=y))
            cursor += d
            y = y - params.lam * d
            x = floor
            mode = "interior"
    return FluidTrajectory(params=params, spec=spec, segments=tuple(segments),
                           horizon=horizon)


# ---------------------------------------------------------------------------
# time-varying arrival rate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TVFluidTrajectory:
    """Sampled uncentered fluid path under a time-varying arrival rate."""

    params: ModelParams
    arrival: ArrivalRateFn
    t: np.ndarray
    y: np.ndarray
    x: np.ndarray
    on_floor: np.ndarray
    dt: float
    horizon: float

    def states(self, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        if ts.size and (ts.min() < -1e-12 or ts.max() > self.horizon * (1 + 1e-12) + 1e-12):
            raise FluidSolverError(f"evaluation times outside [0, {self.horizon}]")
        out = np.empty((ts.size, 2))
        out[:, 0] = np.interp(ts, self.t, self.y)
        out[:, 1] = np.interp(ts, self.t, self.x)
        return out

    def state(self, t: float) -> np.ndarray:
        return self.states(np.array([t]))[0]

    def eval_on(self, grid: np.ndarray) -> np.ndarray:
        return self.states(grid)

    def to_csv(self, path, every: int = 1) -> None:
        with open(path, "w") as fh:
            fh.write("t,y,x,segment_kind\n")
            for i in range(0, len(self.t), every):
                kind = "boundary" if self.on_floor[i] else "interior"
                fh.write(f"{self.t[i]:.10g},{self.y[i] + 0.0:.12g},"
                         f"{self.x[i] + 0.0:.12g},{kind}\n")


def solve_fluid_tv(initial, arrival: ArrivalRateFn | None, params: ModelParams,
                   horizon: float, dt: float = 1e-3) -> TVFluidTrajectory:
    """Fixed-step 4th-order integration of the uncentered pair (y, x).

    Off the floor: y' = beta*x - lam(t), x' = gamma*lam(t) - gamma*beta*x -
    epsilon*y.  On the floor x = 0 (entered while gamma*lam(t) - epsilon*y <=
    0): y' = -lam(t) and x stays 0 until the lift-off expression turns
    positive.  Floor entries and exits are located by bisection inside the
    step; integration restarts at jump times of lam(.).
    """
    validate_params(params, scheme="A")
    if horizon <= 0.0 or dt <= 0.0:
        raise FluidSolverError("horizon and dt must be > 0")
    if arrival is None:
        arrival = ConstantArrival(params.lam)
    y0, x0 = (initial.y, initial.x) if isinstance(initial, FluidState) else (
        float(initial[0]), float(initial[1]))
    if x0 < -1e-12:
        raise InvalidInitial(f"x={x0} negative")
    x0 = max(x0, 0.0)

    beta, gamma, eps = params.beta, params.gamma, params.epsilon

    def f_interior(lamf, t, y, x):
        lt = lamf(t)
        return beta * x - lt, gamma * lt - gamma * beta * x - eps * y

    def rk4_interior(lamf, t, y, x, h):
        k1y, k1x = f_interior(lamf, t, y, x)
        k2y, k2x = f_interior(lamf, t + h / 2, y + h / 2 * k1y, x + h / 2 * k1x)
        k3y, k3x = f_interior(lamf, t + h / 2, y + h / 2 * k2y, x + h / 2 * k2x)
        k4y, k4x = f_interior(lamf, t + h, y + h * k3y, x + h * k3x)
        return (y + h / 6 * (k1y + 2 * k2y + 2 * k3y + k4y),
                x + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x))

    def rk4_floor(lamf, t, y, h):
        # y' = -lam(t) with x pinned at 0
        return y - h / 6 * (lamf(t) + 4 * lamf(t + h / 2) + lamf(t + h))

    def liftoff(lamf, t, y):
        return gamma * lamf(t) - eps * y

    n = int(math.floor(horizon / dt * (1 + 1e-12))) + 1
    ts_out = np.arange(n) * dt
    ys = np.empty(n)
    xs = np.empty(n)
    floors = np.zeros(n, dtype=bool)
    y, x = y0, x0
    on_floor = x <= 0.0 and liftoff(arrival, 0.0, y) <= 0.0
    if on_floor:
        x = 0.0
    ys[0], xs[0], floors[0] = y, x, on_floor

    for i in range(1, n):
        t_lo, t_hi = ts_out[i - 1], ts_out[i]
        pieces = [t_lo] + arrival.jump_times(t_lo, t_hi) + [t_hi]
        t = t_lo
        for pe in pieces[1:]:
            # a rate jump may sit exactly at pe; stage evaluations hitting the
            # piece end must see the left limit, not the post-jump value
            left_rate = arrival(pe - 1e-9 * max(1.0, abs(pe)))

            def lamf(s, _pe=pe, _lr=left_rate):
                return arrival(s) if s < _pe else _lr

            stall = 0
            while t < pe - 1e-15:
                t_before = t
                h = pe - t
                if stall >= 3:
                    # exact-tie deadlock between the two modes; one clamped
                    # explicit step breaks it at O(dt) cost
                    y, x1 = rk4_interior(lamf, t, y, x, h)
                    x = max(x1, 0.0)
                    t = pe
                    on_floor = x == 0.0 and liftoff(lamf, t, y) <= 0.0
                    break
                if not on_floor and x <= 0.0:
                    x = 0.0
                    if liftoff(lamf, t, y) <= 0.0:
                        on_floor = True
                if on_floor:
                    if liftoff(lamf, t, y) > 0.0:
                        on_floor = False
                    else:
                        y1 = rk4_floor(lamf, t, y, h)
                        if liftoff(lamf, t + h, y1) > 0.0:
                            lo, hi = 0.0, h
                            for _ in range(60):
                                mid = 0.5 * (lo + hi)
                                if liftoff(lamf, t + mid, rk4_floor(lamf, t, y, mid)) > 0.0:
                                    hi = mid
                                else:
                                    lo = mid
                            y = rk4_floor(lamf, t, y, hi)
                            t += hi
                            on_floor = False
                        else:
                            y = y1
                            t = pe
                else:
                    y1, x1 = rk4_interior(lamf, t, y, x, h)
                    if x1 < 0.0:
                        lo, hi = 0.0, h
                        for _ in range(60):
                            mid = 0.5 * (lo + hi)
                            if rk4_interior(lamf, t, y, x, mid)[1] < 0.0:
                                hi = mid
                            else:
                                lo = mid
                        y, _ = rk4_interior(lamf, t, y, x, lo)
                        x = 0.0
                        t += lo
                        on_floor = liftoff(lamf, t, y) <= 0.0
                    else:
                        y, x = y1, x1
                        t = pe
                stall = stall + 1 if t == t_before else 0
        ys[i], xs[i], floors[i] = y, x, on_floor
    return TVFluidTrajectory(params=params, arrival=arrival, t=ts_out, y=ys,
                             x=xs, on_floor=floors, dt=dt, horizon=horizon)


# ---------------------------------------------------------------------------
# drift audit of the weighted norm
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DriftReport:
    interior_ratio_min: float | None
    interior_ratio_max: float | None
    boundary_drift_max: float | None
    boundary_segments: int
    points_checked: int
    grid_dt: float


def drift_check(traj: FluidTrajectory, spec: SpectralData | None = None,
                grid_dt: float = 0.01, fd_step: float = 1e-6,
                norm_floor: float = 1e-9) -> DriftReport:
    """Finite-difference audit of d/dt of the weighted norm along the path.

    Interior points report the decay ratio -n'(t)/n(t), which should never
    fall below the slow rate nu1; boundary points report n'(t) itself, which
    should be strictly negative.  Points within fd_step of a segment joint
    are excluded since the derivative jumps there.
    """
    spec = spec or traj.spec
    binv = spec.basis_inv
    ratios: list[float] = []
    bdrifts: list[float] = []
    checked = 0
    for seg in traj.segments:
        margin = 10 * fd_step
        if seg.duration <= 2 * margin:
            continue
        taus = np.arange(margin, seg.duration - margin, grid_dt)
        if taus.size == 0:
            taus = np.array([seg.duration / 2])
        if isinstance(seg, InteriorSegment):
            def norm_at(tt):
                c1 = seg.alpha1 * np.exp(-spec.nu1 * tt)
                c2 = seg.alpha2 * np.exp(-spec.nu2 * tt)
                return np.hypot(c1, c2)
            n0 = norm_at(taus)
            deriv = (norm_at(taus + fd_step) - norm_at(taus - fd_step)) / (2 * fd_step)
            keep = n0 > norm_floor
            checked += int(keep.sum())
            if keep.any():
                ratios.extend((-deriv[keep] / n0[keep]).tolist())
        else:
            ystart = seg.y_start
            lam, beta = traj.params.lam, traj.params.beta

            def norm_at(tt):
                u = np.stack([ystart - lam * tt, np.full_like(tt, -lam / beta)], axis=-1)
                al = u @ binv
                return np.hypot(al[..., 0], al[..., 1])
            deriv = (norm_at(taus + fd_step) - norm_at(taus - fd_step)) / (2 * fd_step)
            checked += taus.size
            bdrifts.extend(deriv.tolist())
    return DriftReport(
        interior_ratio_min=min(ratios) if ratios else None,
        interior_ratio_max=max(ratios) if ratios else None,
        boundary_drift_max=max(bdrifts) if bdrifts else None,
        boundary_segments=traj.boundary_segments,
        points_checked=checked,
        grid_dt=grid_dt,
    )
