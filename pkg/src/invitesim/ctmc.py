"""Exact event-by-event simulation of the invitation system.

Two control schemes share the same arrival/acceptance skeleton:

scheme B   the pending count X moves by +gamma on arrivals, -(gamma ^ X) on
           acceptances, and feedback events at rate epsilon*|Y| nudge X one
           step against the sign of Y (stalling at X = 0).
scheme A   a real-valued target is updated at queue changes and X is topped
           up to ceil(target) whenever it falls below; invitations are never
           withdrawn.

Holding times use competing exponential clocks; time-varying arrival rates are
handled by thinning against the profile's declared bound.  Per event the
uniform stream is consumed in a fixed order (hold, pick, thin-if-candidate,
round-if-enabled), which keeps seeded runs reproducible bit for bit.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .params import (
    ArrivalRateFn,
    InviteSimError,
    ModelParams,
    validate_params,
)


class SimulationError(InviteSimError):
    pass


class HorizonZero(SimulationError):
    pass


class ThinningBoundViolated(SimulationError):
    pass


class DriverMismatch(SimulationError):
    pass


# event kind codes shared by the logs and the pathwise replay
K_ARRIVAL = 0
K_ACCEPT = 1
K_FEEDBACK_UP = 2    # Y < 0: one extra invitation
K_FEEDBACK_DOWN = 3  # Y > 0: one invitation withdrawn (no-op at X = 0)
K_REJECT = 4         # scheme A only

KIND_NAMES = ("arrival", "accept", "feedback_up", "feedback_down", "reject")

_BUF = 1 << 16


@dataclass(frozen=True)
class RandomStream:
    """Seed plus a spawn path; equal values reproduce the same draws anywhere."""

    seed: int
    path: tuple[int, ...] = ()

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, index: int) -> "RandomStream":
        return RandomStream(self.seed, self.path + (index,))


@dataclass(frozen=True)
class SystemState:
    y: int
    x: int
    t: float = 0.0
    x_target: float | None = None

    def __post_init__(self) -> None:
        if self.x < 0:
            raise SimulationError(f"pending count must be >= 0, got {self.x}")
        if self.x_target is not None and self.x_target < 0.0:
            raise SimulationError(f"x_target must be >= 0, got {self.x_target}")


@dataclass(frozen=True)
class GridSpec:
    dt: float = 0.01
    record_events: bool = False
    event_budget: int = 5_000_000

    def __post_init__(self) -> None:
        if self.dt <= 0.0:
            raise SimulationError(f"grid dt must be > 0, got {self.dt}")
        if self.event_budget <= 0:
            raise SimulationError("event budget must be > 0")


@dataclass(frozen=True)
class EventLog:
    t: np.ndarray
    kind: np.ndarray
    dy: np.ndarray
    dx: np.ndarray
    truncated: bool

    def __len__(self) -> int:
        return len(self.t)

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for i in range(len(self.t)):
                fh.write(json.dumps({
                    "t": float(self.t[i]),
                    "kind": KIND_NAMES[int(self.kind[i])],
                    "dy": int(self.dy[i]),
                    "dx": int(self.dx[i]),
                }) + "\n")


@dataclass(frozen=True)
class Trajectory:
    """Grid samples of one run plus enough metadata to reproduce it."""

    scheme: str
    t: np.ndarray
    y: np.ndarray
    x: np.ndarray
    x_target: np.ndarray | None
    params: ModelParams
    arrival: ArrivalRateFn | None
    stream: RandomStream
    grid_dt: float
    horizon: float
    n_events: int
    events: EventLog | None = None

    @property
    def time_varying(self) -> bool:
        return self.arrival is not None and not self.arrival.is_constant

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            if self.x_target is None:
                fh.write("t,y,x\n")
                for i in range(len(self.t)):
                    fh.write(f"{self.t[i]:.10g},{self.y[i]},{self.x[i]}\n")
            else:
                fh.write("t,y,x,x_target\n")
                for i in range(len(self.t)):
                    fh.write(f"{self.t[i]:.10g},{self.y[i]},{self.x[i]},"
                             f"{self.x_target[i]:.10g}\n")


@dataclass(frozen=True)
class ScaledTrajectory:
    """A trajectory mapped onto one of the asymptotic scales."""

    t: np.ndarray
    y: np.ndarray
    x: np.ndarray
    scale: str  # "fluid-centered" | "fluid-uncentered" | "diffusion"
    scale_r: float
    x_target: np.ndarray | None = None

    def eval_on(self, grid: np.ndarray) -> np.ndarray:
        grid = np.asarray(grid, dtype=float)
        if len(self.t) == 0 or grid.min() < self.t[0] - 1e-9 or grid.max() > self.t[-1] + 1e-9:
            from .stats import GridOutsideHorizon
            raise GridOutsideHorizon(
                f"grid [{grid.min()}, {grid.max()}] outside samples "
                f"[{self.t[0] if len(self.t) else '-'}, {self.t[-1] if len(self.t) else '-'}]")
        out = np.empty((len(grid), 2))
        out[:, 0] = np.interp(grid, self.t, self.y)
        out[:, 1] = np.interp(grid, self.t, self.x)
        return out


def transition_rates_b(state: SystemState, params: ModelParams,
                       arrival: ArrivalRateFn | None = None) -> list[tuple[float, int, int]]:
    """Enabled scheme-B events as (rate, dy, dx); zero-rate entries omitted.

    The feedback event keeps its positive rate even when it cannot move the
    state (X = 0, Y > 0); it is then a null jump.
    """
    lam_t = params.lam if arrival is None else arrival(state.t)
    rate_arrival = lam_t * params.scale_r
    gamma = int(params.gamma)
    out = []
    if rate_arrival > 0.0:
        out.append((rate_arrival, -1, gamma))
    rate_accept = params.beta * state.x
    if rate_accept > 0.0:
        out.append((rate_accept, 1, -min(gamma, state.x)))
    rate_fb = params.epsilon * abs(state.y)
    if rate_fb > 0.0:
        if state.x >= 1:
            out.append((rate_fb, 0, -1 if state.y > 0 else 1))
        elif state.y < 0:
            out.append((rate_fb, 0, 1))
        else:
            out.append((rate_fb, 0, 0))
    return out


def _grid_size(horizon: float, dt: float) -> int:
    return int(math.floor(horizon / dt * (1.0 + 1e-12))) + 1


def simulate_b(initial: SystemState | tuple[int, int], params: ModelParams,
               horizon: float, stream: RandomStream,
               arrival: ArrivalRateFn | None = None,
               sampling: GridSpec | None = None,
               randomized_rounding: bool = False) -> Trajectory:
    """Run scheme B exactly over [0, horizon], sampling on a uniform grid."""
    if horizon <= 0.0:
        raise HorizonZero(f"horizon must be > 0, got {horizon}")
    validate_params(params, scheme="B", randomized_rounding=randomized_rounding)
    if sampling is None:
        sampling = GridSpec()
    if isinstance(initial, tuple):
        initial = SystemState(y=initial[0], x=initial[1])

    y = int(initial.y)
    x = int(initial.x)
    beta = params.beta
    eps = params.epsilon
    r = params.scale_r
    thinning = arrival is not None and not arrival.is_constant
    if arrival is None:
        bound_rate = params.lam * r
    else:
        bound_rate = arrival.bound() * r
    bound = bound_rate / r if r else 0.0
    gamma_int = int(params.gamma) if float(params.gamma).is_integer() else 0
    rounding = randomized_rounding and not float(params.gamma).is_integer()
    g_lo = int(math.floor(params.gamma))
    g_frac = params.gamma - g_lo

    dtg = sampling.dt
    n_grid = _grid_size(horizon, dtg)
    ts = np.arange(n_grid) * dtg
    ys = np.empty(n_grid, dtype=np.int64)
    xs = np.empty(n_grid, dtype=np.int64)
    gi = 0

    logging = sampling.record_events
    budget = sampling.event_budget
    ev_t: list[float] = []
    ev_k: list[int] = []
    ev_dy: list[int] = []
    ev_dx: list[int] = []
    truncated = False

    gen = stream.generator()
    buf = gen.random(_BUF).tolist()
    bi = 0
    log = math.log
    t = 0.0
    n_events = 0
    lam_fn = arrival

    while True:
        acc = beta * x
        fb = eps * (y if y > 0 else -y)
        total = bound_rate + acc + fb
        if total <= 0.0:
            break
        if bi >= _BUF:
            buf = gen.random(_BUF).tolist()
            bi = 0
        u = buf[bi]
        bi += 1
        tn = t + -log(1.0 - u) / total
        while gi < n_grid and gi * dtg < tn:
            ys[gi] = y
            xs[gi] = x
            gi += 1
        if gi >= n_grid or tn > horizon:
            break
        t = tn
        if bi >= _BUF:
            buf = gen.random(_BUF).tolist()
            bi = 0
        pick = buf[bi] * total
        bi += 1
        if pick < bound_rate:
            if thinning:
                lam_t = lam_fn(t)
                if lam_t > bound * (1.0 + 1e-9):
                    raise ThinningBoundViolated(
                        f"arrival rate {lam_t} exceeds declared bound {bound} at t={t}")
                if bi >= _BUF:
                    buf = gen.random(_BUF).tolist()
                    bi = 0
                keep = buf[bi] * bound < lam_t
                bi += 1
                if not keep:
                    continue
            if rounding:
                if bi >= _BUF:
                    buf = gen.random(_BUF).tolist()
                    bi = 0
                step = g_lo + (1 if buf[bi] < g_frac else 0)
                bi += 1
            else:
                step = gamma_int
            y -= 1
            x += step
            k = K_ARRIVAL
            dy = -1
            dx = step
        elif pick < bound_rate + acc:
            if rounding:
                if bi >= _BUF:
                    buf = gen.random(_BUF).tolist()
                    bi = 0
                step = g_lo + (1 if buf[bi] < g_frac else 0)
                bi += 1
            else:
                step = gamma_int
            dx = -(step if x >= step else x)
            y += 1
            x += dx
            k = K_ACCEPT
            dy = 1
        else:
            dy = 0
            if x >= 1:
                if y > 0:
                    dx = -1
                    k = K_FEEDBACK_DOWN
                else:
                    dx = 1
                    k = K_FEEDBACK_UP
            elif y < 0:
                dx = 1
                k = K_FEEDBACK_UP
            else:
                dx = 0
                k = K_FEEDBACK_DOWN
            x += dx
        n_events += 1
        if logging:
            if len(ev_t) < budget:
                ev_t.append(t)
                ev_k.append(k)
                ev_dy.append(dy)
                ev_dx.append(dx)
            else:
                truncated = True
                logging = False

    while gi < n_grid:
        ys[gi] = y
        xs[gi] = x
        gi += 1

    events = None
    if sampling.record_events:
        events = EventLog(
            t=np.array(ev_t, dtype=float),
            kind=np.array(ev_k, dtype=np.int8),
            dy=np.array(ev_dy, dtype=np.int8),
            dx=np.array(ev_dx, dtype=np.int32),
            truncated=truncated,
        )
    return Trajectory(scheme="B", t=ts, y=ys, x=xs, x_target=None,
                      params=params, arrival=arrival, stream=stream,
                      grid_dt=dtg, horizon=horizon, n_events=n_events,
                      events=events)


def drift_replicates_b(initial: SystemState | tuple[int, int], params: ModelParams,
                       dt: float, n_replicates: int, stream: RandomStream,
                       arrival: ArrivalRateFn | None = None) -> np.ndarray:
    """(dY, dX) totals over [0, dt] for n_replicates independent restarts.

    Shares the scheme-B transition logic and uniform-consumption order of
    simulate_b; one generator serves all replicates.  Used by the generator
    drift check.
    """
    if dt <= 0.0:
        raise HorizonZero(f"dt must be > 0, got {dt}")
    validate_params(params, scheme="B")
    if isinstance(initial, tuple):
        initial = SystemState(y=initial[0], x=initial[1])
    y0 = int(initial.y)
    x0 = int(initial.x)
    beta = params.beta
    eps = params.epsilon
    r = params.scale_r
    thinning = arrival is not None and not arrival.is_constant
    bound_rate = (params.lam if arrival is None else arrival.bound()) * r
    bound = bound_rate / r if r else 0.0
    gamma_int = int(params.gamma)
    gen = stream.generator()
    buf = gen.random(_BUF).tolist()
    bi = 0
    log = math.log
    lam_fn = arrival
    out = np.empty((n_replicates, 2), dtype=np.int64)

    for rep in range(n_replicates):
        y = y0
        x = x0
        t = 0.0
        while True:
            acc = beta * x
            fb = eps * (y if y > 0 else -y)
            total = bound_rate + acc + fb
            if total <= 0.0:
                break
            if bi >= _BUF:
                buf = gen.random(_BUF).tolist()
                bi = 0
            u = buf[bi]
            bi += 1
            t += -log(1.0 - u) / total
            if t > dt:
                break
            if bi >= _BUF:
                buf = gen.random(_BUF).tolist()
                bi = 0
            pick = buf[bi] * total
            bi += 1
            if pick < bound_rate:
                if thinning:
                    lam_t = lam_fn(t)
                    if lam_t > bound * (1.0 + 1e-9):
                        raise ThinningBoundViolated(
                            f"arrival rate {lam_t} exceeds declared bound {bound} at t={t}")
                    if bi >= _BUF:
                        buf = gen.random(_BUF).tolist()
                        bi = 0
                    keep = buf[bi] * bound < lam_t
                    bi += 1
                    if not keep:
                        continue
                y -= 1
                x += gamma_int
            elif pick < bound_rate + acc:
                y += 1
                x -= gamma_int if x >= gamma_int else x
            else:
                if x >= 1:
                    x += -1 if y > 0 else 1
                elif y < 0:
                    x += 1
        out[rep, 0] = y - y0
        out[rep, 1] = x - x0
    return out


def simulate_a(initial: SystemState, params: ModelParams, horizon: float,
               stream: RandomStream, arrival: ArrivalRateFn | None = None,
               sampling: GridSpec | None = None) -> Trajectory:
    """Run scheme A (invitation targets with ceiling replenishment).

    The target moves at queue changes by -gamma*dY - epsilon*Y*elapsed, with Y
    its pre-change value and elapsed the time since the previous queue change;
    it is clipped at zero.  After every event, X below the target is topped up
    to ceil(target).  Rejections remove one pending invitation and do not
    touch the target or the elapsed-time clock.
    """
    if horizon <= 0.0:
        raise HorizonZero(f"horizon must be > 0, got {horizon}")
    validate_params(params, scheme="A")
    if sampling is None:
        sampling = GridSpec()
    if initial.x_target is None:
        raise SimulationError("scheme A needs an initial x_target")

    y = int(initial.y)
    x = int(initial.x)
    target = float(initial.x_target)
    last_change = 0.0
    beta = params.beta
    beta_t = params.beta_tilde
    gamma = params.gamma
    eps = params.epsilon
    r = params.scale_r
    thinning = arrival is not None and not arrival.is_constant
    bound_rate = (params.lam if arrival is None else arrival.bound()) * r
    bound = bound_rate / r if r else 0.0
    lam_fn = arrival

    dtg = sampling.dt
    n_grid = _grid_size(horizon, dtg)
    ts = np.arange(n_grid) * dtg
    ys = np.empty(n_grid, dtype=np.int64)
    xs = np.empty(n_grid, dtype=np.int64)
    tgts = np.empty(n_grid, dtype=float)
    gi = 0

    logging = sampling.record_events
    budget = sampling.event_budget
    ev_t: list[float] = []
    ev_k: list[int] = []
    ev_dy: list[int] = []
    ev_dx: list[int] = []
    truncated = False

    gen = stream.generator()
    buf = gen.random(_BUF).tolist()
    bi = 0
    log = math.log
    ceil = math.ceil
    t = 0.0
    n_events = 0

    while True:
        acc = beta * x
        rej = beta_t * x
        total = bound_rate + acc + rej
        if total <= 0.0:
            break
        if bi >= _BUF:
            buf = gen.random(_BUF).tolist()
            bi = 0
        u = buf[bi]
        bi += 1
        tn = t + -log(1.0 - u) / total
        while gi < n_grid and gi * dtg < tn:
            ys[gi] = y
            xs[gi] = x
            tgts[gi] = target
            gi += 1
        if gi >= n_grid or tn > horizon:
            break
        t = tn
        if bi >= _BUF:
            buf = gen.random(_BUF).tolist()
            bi = 0
        pick = buf[bi] * total
        bi += 1
        x_before = x
        if pick < bound_rate:
            if thinning:
                lam_t = lam_fn(t)
                if lam_t > bound * (1.0 + 1e-9):
                    raise ThinningBoundViolated(
                        f"arrival rate {lam_t} exceeds declared bound {bound} at t={t}")
                if bi >= _BUF:
                    buf = gen.random(_BUF).tolist()
                    bi = 0
                keep = buf[bi] * bound < lam_t
                bi += 1
                if not keep:
                    continue
            elapsed = t - last_change
            y_pre = y
            y -= 1
            target = max(0.0, target + gamma - eps * y_pre * elapsed)
            last_change = t
            k = K_ARRIVAL
            dy = -1
        elif pick < bound_rate + acc:
            elapsed = t - last_change
            y_pre = y
            y += 1
            x -= 1
            target = max(0.0, target - gamma - eps * y_pre * elapsed)
            last_change = t
            k = K_ACCEPT
            dy = 1
        else:
            x -= 1
            k = K_REJECT
            dy = 0
        if x < target:
            x = ceil(target)
        n_events += 1
        if logging:
            if len(ev_t) < budget:
                ev_t.append(t)
                ev_k.append(k)
                ev_dy.append(dy)
                ev_dx.append(x - x_before)
            else:
                truncated = True
                logging = False

    while gi < n_grid:
        ys[gi] = y
        xs[gi] = x
        tgts[gi] = target
        gi += 1

    events = None
    if sampling.record_events:
        events = EventLog(
            t=np.array(ev_t, dtype=float),
            kind=np.array(ev_k, dtype=np.int8),
            dy=np.array(ev_dy, dtype=np.int8),
            dx=np.array(ev_dx, dtype=np.int32),
            truncated=truncated,
        )
    return Trajectory(scheme="A", t=ts, y=ys, x=xs, x_target=tgts,
                      params=params, arrival=arrival, stream=stream,
                      grid_dt=dtg, horizon=horizon, n_events=n_events,
                      events=events)


# ---------------------------------------------------------------------------
# scalings
# ---------------------------------------------------------------------------

def fluid_scale(traj: Trajectory, params: ModelParams | None = None,
                centered: bool | None = None) -> ScaledTrajectory:
    """(y, x)/r with the pending count recentered at lam*r/beta when centered.

    Constant-rate runs default to the centered scale, time-varying ones to the
    uncentered scale used by the time-varying fluid limit.
    """
    p = params or traj.params
    if centered is None:
        centered = not traj.time_varying
    r = p.scale_r
    shift = p.center_x if centered else 0.0
    tgt = None
    if traj.x_target is not None:
        tgt = (traj.x_target - shift) / r
    return ScaledTrajectory(
        t=traj.t,
        y=traj.y / r,
        x=(traj.x - shift) / r,
        scale="fluid-centered" if centered else "fluid-uncentered",
        scale_r=r,
        x_target=tgt,
    )


def diffusion_scale(traj: Trajectory, params: ModelParams | None = None) -> ScaledTrajectory:
    """(y, x - lam*r/beta) / sqrt(r)."""
    p = params or traj.params
    root = math.sqrt(p.scale_r)
    tgt = None
    if traj.x_target is not None:
        tgt = (traj.x_target - p.center_x) / root
    return ScaledTrajectory(
        t=traj.t,
        y=traj.y / root,
        x=(traj.x - p.center_x) / root,
        scale="diffusion",
        scale_r=p.scale_r,
        x_target=tgt,
    )


# ---------------------------------------------------------------------------
# pathwise replay through the reflection map
# ---------------------------------------------------------------------------

_Z_DELTA = {K_FEEDBACK_UP: 1, K_FEEDBACK_DOWN: -1}
_DY_BY_KIND = {K_ARRIVAL: -1, K_ACCEPT: 1, K_FEEDBACK_UP: 0, K_FEEDBACK_DOWN: 0}


def reflect_representation(initial: SystemState | tuple[int, int], events: EventLog,
                           params: ModelParams) -> np.ndarray:
    """Rebuild the pending count from driver ticks via one-sided reflection.

    The free walk Z moves by +gamma per arrival tick, -gamma per acceptance
    tick, and +/-1 per feedback tick regardless of the direct rule's stalls
    and truncations; the reflected path Z(t) + max(0, -min Z) must reproduce
    X exactly.  Returns X after each logged event.  Raises DriverMismatch if
    the logged queue increments contradict the event kinds.
    """
    if isinstance(initial, tuple):
        initial = SystemState(y=initial[0], x=initial[1])
    if not float(params.gamma).is_integer():
        raise SimulationError("pathwise replay needs integer gamma")
    gamma = int(params.gamma)
    kinds = events.kind.astype(np.int64)
    if kinds.size and (kinds.min() < K_ARRIVAL or kinds.max() > K_FEEDBACK_DOWN):
        raise DriverMismatch("replay supports scheme-B event kinds only")
    dy_expected = np.array([_DY_BY_KIND[k] for k in (K_ARRIVAL, K_ACCEPT,
                                                     K_FEEDBACK_UP, K_FEEDBACK_DOWN)])
    if kinds.size and not np.array_equal(dy_expected[kinds], events.dy.astype(np.int64)):
        raise DriverMismatch("queue increments inconsistent with event kinds")
    z_step = np.zeros(len(kinds), dtype=np.int64)
    z_step[kinds == K_ARRIVAL] = gamma
    z_step[kinds == K_ACCEPT] = -gamma
    z_step[kinds == K_FEEDBACK_UP] = 1
    z_step[kinds == K_FEEDBACK_DOWN] = -1
    z = int(initial.x) + np.cumsum(z_step)
    run_min = np.minimum.accumulate(np.minimum(z, int(initial.x)))
    regulator = np.maximum(-run_min, 0)
    return z + regulator
