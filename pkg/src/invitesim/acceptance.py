"""Acceptance suites: ten pinned-seed experiments with hard thresholds.

Each suite runs one quantitative claim end to end and reports measured values
next to its thresholds.  Suites are deterministic given the pinned seeds, so
a rerun produces identical numbers.  Results print one line each; the runner
exits nonzero when any executed suite fails.
"""
from __future__ import annotations

import functools
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .ctmc import (
    GridSpec,
    RandomStream,
    SystemState,
    drift_replicates_b,
    fluid_scale,
    reflect_representation,
    simulate_a,
    simulate_b,
)
from .diffusion import (
    DiffusionState,
    lyapunov_residual,
    moment_ode,
    simulate_sde_ensemble,
    stationary_covariance,
)
from .fluid import FluidState, drift_check, solve_fluid, solve_fluid_tv
from .params import ModelParams, SinusoidArrival, spectral_decompose, star_norm
from .stats import batch_means, stationary_moments, sup_deviation

P6 = ModelParams(lam=1.0, scale_r=1000.0, beta=1.0, gamma=2.0, epsilon=0.2)
SINE = SinusoidArrival(base=1.0, amplitude=0.2, period=120.0)

SEEDS = {
    "generator": 101,
    "fluid-convergence": 202,
    "stationary": 404,
    "sde-ode": 707,
    "scheme-a": 808,
    "time-varying": 909,
    "reflection": 1100,
}


@dataclass(frozen=True)
class CriterionResult:
    name: str
    passed: bool
    measured: dict
    thresholds: dict
    wall_clock_s: float
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name}: {self.detail}"

    def to_json_dict(self) -> dict:
        return {
            "criterion": self.name,
            "pass": self.passed,
            "measured": self.measured,
            "thresholds": self.thresholds,
            "wall_clock_s": self.wall_clock_s,
            "detail": self.detail,
        }


def _finish(name, passed, measured, thresholds, t0, detail) -> CriterionResult:
    return CriterionResult(name=name, passed=bool(passed), measured=measured,
                           thresholds=thresholds,
                           wall_clock_s=round(time.perf_counter() - t0, 3),
                           detail=detail)


# ---------------------------------------------------------------------------
# 1. generator correctness
# ---------------------------------------------------------------------------

GENERATOR_STATES = (
    (0, 0), (1, 0), (-1, 0), (3, 0), (-3, 0), (9, 0), (-9, 0),
    (0, 1), (0, 4), (1, 1), (-1, 1), (4, 1), (-4, 2),
    (5, 2), (-5, 3), (2, 7), (-2, 6), (7, 10), (-7, 12), (6, 3),
)


def criterion_generator() -> CriterionResult:
    """Mean one-step drift over a short window vs the written-out rate sums."""
    t0 = time.perf_counter()
    dt, n = 1e-4, 100_000
    stream = RandomStream(seed=SEEDS["generator"])
    lam_r = P6.raw_arrival_rate
    worst = 0.0
    worst_state = None
    for k, (y, x) in enumerate(GENERATOR_STATES):
        # expectations written out longhand, independent of the rate table:
        # arrivals Lam (dy -1, dx +gamma); acceptances beta*x (dy +1,
        # dx -min(gamma, x)); feedback eps*|y| nudging x toward balance,
        # with the x=0 case only able to push up (y<0) or idle (y>0)
        exp_dy = (-lam_r + P6.beta * x) * dt
        if x >= 1:
            fb = -P6.epsilon * y
        else:
            fb = P6.epsilon * abs(y) if y < 0 else 0.0
        exp_dx = (lam_r * P6.gamma - P6.beta * x * min(P6.gamma, x) + fb) * dt
        deltas = drift_replicates_b(SystemState(y, x), P6, dt=dt, n_replicates=n,
                                    stream=stream.child(k))
        emp = deltas.mean(axis=0)
        se = np.maximum(deltas.std(axis=0, ddof=1) / math.sqrt(n), 1e-15)
        z = np.abs((emp - [exp_dy, exp_dx]) / se)
        if z.max() > worst:
            worst = float(z.max())
            worst_state = (y, x)
    passed = worst <= 3.0
    return _finish(
        "generator", passed,
        {"max_abs_z": worst, "worst_state": list(worst_state),
         "states": len(GENERATOR_STATES), "replicates": n, "dt": dt},
        {"max_abs_z": 3.0}, t0,
        f"max |z| {worst:.2f} over {len(GENERATOR_STATES)} states, "
        f"{n} replicates (threshold 3)")


# ---------------------------------------------------------------------------
# 2. fluid convergence
# ---------------------------------------------------------------------------

SCALED_INITIALS = ((0.0, -1.0), (1.0, -1.0), (0.0, 1.0), (-1.0, 1.0))
FLUID_DEV_THRESHOLDS = {100: 0.08, 1000: 0.03}


def _unscaled_initial(scaled, r: float, params: ModelParams) -> SystemState:
    y = int(round(scaled[0] * r))
    x = int(round((scaled[1] + params.lam / params.beta) * r))
    return SystemState(y=y, x=x)


def _fluid_dev(scaled_initial, r: float, stream: RandomStream,
               horizon: float = 50.0, grid_dt: float = 0.05) -> float:
    p = replace(P6, scale_r=float(r))
    init = _unscaled_initial(scaled_initial, r, p)
    traj = simulate_b(init, p, horizon=horizon, stream=stream,
                      sampling=GridSpec(dt=grid_dt))
    ref = solve_fluid(scaled_initial, p, horizon=horizon)
    grid = np.arange(0.0, horizon * (1 + 1e-12), grid_dt)
    return sup_deviation(fluid_scale(traj, p), ref, grid).sup


def criterion_fluid_convergence(replications: int = 20) -> CriterionResult:
    t0 = time.perf_counter()
    stream = RandomStream(seed=SEEDS["fluid-convergence"])
    cells = {}
    ok = True
    for i, scaled in enumerate(SCALED_INITIALS):
        means = {}
        for ri, r in enumerate((100, 1000)):
            devs = [
                _fluid_dev(scaled, r, stream.child(i).child(ri).child(j))
                for j in range(replications)
            ]
            thr = FLUID_DEV_THRESHOLDS[r]
            hits = sum(d <= thr for d in devs)
            means[r] = float(np.mean(devs))
            cells[f"init{i}_r{r}"] = {
                "mean_dev": means[r], "max_dev": float(np.max(devs)),
                "min_dev": float(np.min(devs)),
                "within_threshold": hits, "threshold": thr,
            }
            if hits < 18:
                ok = False
        if not means[1000] < means[100]:
            ok = False
        cells[f"init{i}_mean_decreasing"] = bool(means[1000] < means[100])
    return _finish(
        "fluid-convergence", ok, cells,
        {"per_cell_hits": "≥18/20", "dev_r100": 0.08, "dev_r1000": 0.03,
         "mean_decreasing": True}, t0,
        "; ".join(
            f"init{i}: r=100 hits {cells[f'init{i}_r100']['within_threshold']}/"
            f"{replications} (mean {cells[f'init{i}_r100']['mean_dev']:.3f} vs 0.08), "
            f"r=1000 hits {cells[f'init{i}_r1000']['within_threshold']}/"
            f"{replications} (mean {cells[f'init{i}_r1000']['mean_dev']:.3f} vs 0.03)"
            for i in range(len(SCALED_INITIALS))))


# ---------------------------------------------------------------------------
# 3. fluid model properties
# ---------------------------------------------------------------------------

def _hybrid_reference(initial, params: ModelParams, horizon: float, grid):
    """Adaptive interior integration with event-detected floor contact,
    exact linear slide, and restart at lift-off.  Independent of solve_fluid."""
    from scipy.integrate import solve_ivp

    lam, beta, gamma, eps = params.lam, params.beta, params.gamma, params.epsilon
    floor = -lam / beta
    exit_y = gamma * lam / eps

    def rhs(t, u):
        return [beta * u[1], -eps * u[0] - gamma * beta * u[1]]

    def floor_ev(t, u):
        return u[1] - floor + 1e-12

    floor_ev.terminal = True
    floor_ev.direction = -1.0

    grid = np.asarray(grid, dtype=float)
    out = np.empty((grid.size, 2))
    t_cur = 0.0
    y, x = float(initial[0]), float(initial[1])
    on_floor = x <= floor + 1e-9 and y > exit_y
    guard = 0
    while t_cur < horizon - 1e-12:
        guard += 1
        if guard > 6:
            raise RuntimeError("reference walker failed to terminate")
        mask = (grid >= t_cur - 1e-12) & (grid <= horizon + 1e-12)
        if on_floor:
            dur = min((y - exit_y) / lam, horizon - t_cur)
            seg = mask & (grid <= t_cur + dur + 1e-12)
            tau = grid[seg] - t_cur
            out[seg, 0] = y - lam * tau
            out[seg, 1] = floor
            y -= lam * dur
            t_cur += dur
            x = floor
            on_floor = False
        else:
            sol = solve_ivp(rhs, (0.0, horizon - t_cur), [y, max(x, floor)],
                            events=floor_ev, dense_output=True,
                            rtol=1e-10, atol=1e-12)
            t_end = sol.t[-1]
            seg = mask & (grid <= t_cur + t_end + 1e-12)
            vals = sol.sol(grid[seg] - t_cur)
            out[seg, 0] = vals[0]
            out[seg, 1] = vals[1]
            if sol.t_events[0].size:
                y = float(sol.y_events[0][0][0])
                x = floor
                on_floor = y > exit_y
                if not on_floor:
                    # grazing touch: nudge off the floor and keep going
                    x = floor + 1e-13
            t_cur += t_end
    return out


def criterion_fluid_model(n_states: int = 100) -> CriterionResult:
    t0 = time.perf_counter()
    spec = spectral_decompose(P6)
    rng = np.random.default_rng(303)
    grid = np.arange(0.0, 50.0 * (1 + 1e-12), 0.05)
    horizon_d = 50.0 / spec.nu1
    worst = {"segments": 0, "ratio_min": float("inf"), "bdry_max": -float("inf"),
             "final_norm": 0.0, "ref_sup": 0.0}
    ok = True
    for _ in range(n_states):
        y0 = rng.uniform(-20.0, 20.0)
        x0 = rng.uniform(-P6.lam / P6.beta, 20.0)
        traj = solve_fluid((y0, x0), P6, horizon=50.0)
        worst["segments"] = max(worst["segments"], traj.boundary_segments)
        rep = drift_check(traj, spec)
        if rep.interior_ratio_min is not None:
            worst["ratio_min"] = min(worst["ratio_min"], rep.interior_ratio_min)
            if rep.interior_ratio_min < spec.nu1 * (1 - 1e-6):
                ok = False
        if rep.boundary_drift_max is not None:
            worst["bdry_max"] = max(worst["bdry_max"], rep.boundary_drift_max)
            if rep.boundary_drift_max >= 0.0:
                ok = False
        far = solve_fluid((y0, x0), P6, horizon=horizon_d)
        fn = star_norm(far.state(horizon_d), spec)
        worst["final_norm"] = max(worst["final_norm"], fn)
        ref = _hybrid_reference((y0, x0), P6, 50.0, grid)
        sup = float(np.abs(traj.states(grid) - ref).max())
        worst["ref_sup"] = max(worst["ref_sup"], sup)
    if worst["segments"] > 1 or worst["final_norm"] > 1e-3 or worst["ref_sup"] > 1e-6:
        ok = False
    return _finish(
        "fluid-model", ok,
        {"max_boundary_segments": worst["segments"],
         "min_interior_decay_ratio": worst["ratio_min"],
         "max_boundary_drift": None if worst["bdry_max"] == -float("inf")
                               else worst["bdry_max"],
         "max_final_star_norm": worst["final_norm"],
         "max_sup_vs_reference": worst["ref_sup"], "states": n_states},
        {"max_boundary_segments": 1,
         "min_interior_decay_ratio": spec.nu1 * (1 - 1e-6),
         "max_boundary_drift": 0.0, "max_final_star_norm": 1e-3,
         "max_sup_vs_reference": 1e-6}, t0,
        f"{n_states} states: ≤{worst['segments']} boundary seg, decay ratio "
        f"≥{worst['ratio_min']:.6f} (ν1={spec.nu1:.6f}), ref sup "
        f"{worst['ref_sup']:.2e} (≤1e-6), norm at t=50/ν1 "
        f"{worst['final_norm']:.2e} (≤1e-3)")


# ---------------------------------------------------------------------------
# 4 & 5. stationary mean / diffusion covariance (one shared long run)
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=1)
def _stationary_run():
    return simulate_b(SystemState(0, 1000), P6, horizon=5000.0,
                      stream=RandomStream(seed=SEEDS["stationary"]),
                      sampling=GridSpec(dt=0.05))


def criterion_stationary_mean() -> CriterionResult:
    t0 = time.perf_counter()
    traj = _stationary_run()
    scaled = fluid_scale(traj, P6)
    est = batch_means((scaled.t, np.column_stack([scaled.y, scaled.x])),
                      burn_in=100.0, n_batches=20)
    band = 0.02
    cis = []
    ok = True
    for i, nm in enumerate(("y", "x")):
        lo = est.mean[i] - est.mean_halfwidth[i]
        hi = est.mean[i] + est.mean_halfwidth[i]
        cis.append({"component": nm, "mean": float(est.mean[i]),
                    "ci": [float(lo), float(hi)]})
        if not (-band < lo and hi < band):
            ok = False
    return _finish(
        "stationary-mean", ok,
        {"intervals": cis, "burn_in": 100.0, "n_batches": 20,
         "horizon": traj.horizon},
        {"ci_within": [-band, band]}, t0,
        ", ".join(f"mean({c['component']}) CI [{c['ci'][0]:+.4f}, "
                  f"{c['ci'][1]:+.4f}]" for c in cis) + f" ⊂ (±{band})")


def criterion_diffusion_stationary() -> CriterionResult:
    t0 = time.perf_counter()
    est = stationary_moments(_stationary_run(), P6, burn_in=100.0)
    ref = stationary_covariance(P6)
    checks = [
        ("var_y", est.cov[0, 0], ref[0, 0], 0.10 * ref[0, 0]),
        ("cov_yx", est.cov[0, 1], ref[0, 1], 0.10 * abs(ref[0, 1])),
        ("var_x", est.cov[1, 1], ref[1, 1], 0.10 * ref[1, 1]),
        ("skew_y", est.skew_y, 0.0, 0.1 + est.skew_halfwidth),
        ("exkurt_y", est.exkurt_y, 0.0, 0.2 + est.exkurt_halfwidth),
    ]
    rows = []
    ok = True
    for name, got, want, tol in checks:
        hit = abs(got - want) <= abs(tol)
        rows.append({"entry": name, "estimate": float(got), "reference": float(want),
                     "tolerance": float(abs(tol)), "pass": bool(hit)})
        if not hit:
            ok = False
    return _finish(
        "diffusion-stationary", ok, {"entries": rows},
        {"cov_rel": 0.10, "skew_abs": "0.1+CI", "exkurt_abs": "0.2+CI"}, t0,
        ", ".join(f"{r['entry']}={r['estimate']:+.3f} (ref {r['reference']:+.2f}"
                  f"±{r['tolerance']:.3f})" for r in rows))


# ---------------------------------------------------------------------------
# 6. closed forms
# ---------------------------------------------------------------------------

def criterion_closed_form() -> CriterionResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(606)
    max_res = 0.0
    for _ in range(50):
        beta = rng.uniform(0.2, 3.0)
        gamma = rng.uniform(0.5, 4.0)
        eps = rng.uniform(0.05, 0.95) * gamma ** 2 * beta / 4.0
        p = ModelParams(lam=rng.uniform(0.2, 3.0), scale_r=100.0, beta=beta,
                        gamma=gamma, epsilon=eps)
        max_res = max(max_res, lyapunov_residual(stationary_covariance(p), p))
    path = moment_ode(np.zeros(2), np.zeros((2, 2)), P6, horizon=200.0, dt=1e-2)
    gap = float(np.linalg.norm(path.final.V - stationary_covariance(P6)))
    ok = max_res <= 1e-10 and gap <= 1e-6
    return _finish(
        "closed-form", ok,
        {"max_lyapunov_residual": max_res, "moment_ode_gap_at_200": gap,
         "random_param_sets": 50},
        {"max_lyapunov_residual": 1e-10, "moment_ode_gap_at_200": 1e-6}, t0,
        f"residual ≤ {max_res:.2e} over 50 param sets (≤1e-10); "
        f"‖V(200)−V∞‖ = {gap:.2e} (≤1e-6)")


# ---------------------------------------------------------------------------
# 7. SDE vs moment ODE
# ---------------------------------------------------------------------------

def criterion_sde_ode() -> CriterionResult:
    t0 = time.perf_counter()
    n = 10_000
    states = simulate_sde_ensemble(DiffusionState(0.0, 0.0), P6, horizon=5.0,
                                   stream=RandomStream(seed=SEEDS["sde-ode"]),
                                   n_paths=n, dt=1e-3, record_times=[1.0, 5.0])
    path = moment_ode(np.zeros(2), np.zeros((2, 2)), P6, horizon=5.0, dt=1e-3)
    worst = 0.0
    rows = []
    for k, tt in enumerate((1.0, 5.0)):
        ref = path.at(tt)
        sample = states[k]
        mean = sample.mean(axis=0)
        cov = np.cov(sample.T)
        for i in range(2):
            z = abs(mean[i] - ref.m[i]) / math.sqrt(ref.V[i, i] / n)
            rows.append({"t": tt, "entry": f"mean_{i}", "z": float(z)})
            worst = max(worst, z)
            for j in range(i, 2):
                se = math.sqrt((ref.V[i, i] * ref.V[j, j] + ref.V[i, j] ** 2) / n)
                z = abs(cov[i, j] - ref.V[i, j]) / se
                rows.append({"t": tt, "entry": f"cov_{i}{j}", "z": float(z)})
                worst = max(worst, z)
    ok = worst <= 3.0
    return _finish(
        "sde-ode", ok, {"max_abs_z": float(worst), "paths": n, "checks": rows},
        {"max_abs_z": 3.0}, t0,
        f"max |z| {worst:.2f} across mean/cov at t∈{{1,5}}, {n} paths "
        f"(threshold 3)")


# ---------------------------------------------------------------------------
# 8. replenishment scheme vs instant-adjustment fluid
# ---------------------------------------------------------------------------

def criterion_scheme_a() -> CriterionResult:
    t0 = time.perf_counter()
    p = replace(P6, beta_tilde=1.0)
    traj = simulate_a(SystemState(0, 0, x_target=1000.0), p, horizon=50.0,
                      stream=RandomStream(seed=SEEDS["scheme-a"]),
                      sampling=GridSpec(dt=0.01))
    r = p.scale_r
    win = traj.t >= 1.0
    gap_avg = float(np.mean(np.abs(traj.x[win] - traj.x_target[win])) / r)
    scaled = fluid_scale(traj, p)
    ref = solve_fluid((0.0, 0.0), p, horizon=50.0)
    grid = np.arange(1.0, 50.0 * (1 + 1e-12), 0.05)
    sup = sup_deviation(scaled, ref, grid).sup
    ok = gap_avg <= 0.02 and sup <= 0.05
    return _finish(
        "scheme-a", ok,
        {"mean_scaled_gap": gap_avg, "sup_deviation": sup,
         "window": [1.0, 50.0]},
        {"mean_scaled_gap": 0.02, "sup_deviation": 0.05}, t0,
        f"avg |pool−target|/r = {gap_avg:.4f} (≤0.02); sup dev from fluid "
        f"{sup:.3f} (≤0.05)")


# ---------------------------------------------------------------------------
# 9. time-varying arrivals
# ---------------------------------------------------------------------------

def criterion_time_varying(replications: int = 20) -> CriterionResult:
    t0 = time.perf_counter()
    stream = RandomStream(seed=SEEDS["time-varying"])
    grid = np.arange(5.0, 500.0 * (1 + 1e-12), 0.05)
    cells = {}
    ok = True
    for i, init in enumerate(((0, 0), (-1000, 2000))):
        scaled0 = (init[0] / P6.scale_r, init[1] / P6.scale_r)
        ref = solve_fluid_tv(scaled0, SINE, P6, horizon=500.0, dt=1e-3)
        sup_hits = y_hits = joint = 0
        sups = []
        ymaxes = []
        for j in range(replications):
            traj = simulate_b(SystemState(*init), P6, horizon=500.0,
                              stream=stream.child(i).child(j), arrival=SINE,
                              sampling=GridSpec(dt=0.05))
            sup = sup_deviation(fluid_scale(traj, P6), ref, grid).sup
            ymax = int(np.abs(traj.y[traj.t >= 50.0]).max())
            sups.append(sup)
            ymaxes.append(ymax)
            a = sup <= 0.05
            b = ymax <= 100
            sup_hits += a
            y_hits += b
            joint += a and b
        cells[f"init{i}"] = {
            "initial": list(init),
            "sup_within_005": sup_hits, "ymax_within_100": y_hits,
            "joint": joint, "replications": replications,
            "mean_sup": float(np.mean(sups)), "max_ymax": int(max(ymaxes)),
        }
        if joint < 18:
            ok = False
    return _finish(
        "time-varying", ok, cells, {"joint_hits": "≥18/20", "sup": 0.05,
                                    "abs_y_after_50": 100}, t0,
        "; ".join(
            f"init{i}: sup≤0.05 in {cells[f'init{i}']['sup_within_005']}/"
            f"{replications} (mean {cells[f'init{i}']['mean_sup']:.3f}), "
            f"|Y|≤100 in {cells[f'init{i}']['ymax_within_100']}/{replications} "
            f"(max {cells[f'init{i}']['max_ymax']})" for i in range(2)))


# ---------------------------------------------------------------------------
# 10. reflection replay
# ---------------------------------------------------------------------------

def criterion_reflection() -> CriterionResult:
    t0 = time.perf_counter()
    stream = RandomStream(seed=SEEDS["reflection"])
    runs = []
    small = ModelParams(lam=1.0, scale_r=5.0, beta=1.0, gamma=3.0, epsilon=0.5)
    for k in range(10):
        if k < 8:
            p, init, horizon = P6, SystemState(0, 1000), 6.0
        else:
            p, init, horizon = small, SystemState(8, 2), 1500.0
        traj = simulate_b(init, p, horizon=horizon, stream=stream.child(k),
                          sampling=GridSpec(dt=horizon,
                                            record_events=True,
                                            event_budget=10_000_000))
        log = traj.events
        direct = init.x + np.cumsum(log.dx.astype(np.int64))
        replayed = reflect_representation(init, log, p)
        runs.append({
            "events": traj.n_events,
            "exact": bool(not log.truncated
                          and np.array_equal(direct, replayed)),
        })
    ok = all(r["exact"] and r["events"] >= 10_000 for r in runs)
    return _finish(
        "reflection", ok,
        {"runs": runs},
        {"exact_matches": 10, "min_events": 10_000}, t0,
        f"{sum(r['exact'] for r in runs)}/10 exact integer replays, "
        f"events per run ≥ {min(r['events'] for r in runs)}")


# ---------------------------------------------------------------------------
# runner
# ---------------------------------------------------------------------------

ALL_CRITERIA = {
    "generator": criterion_generator,
    "fluid-convergence": criterion_fluid_convergence,
    "fluid-model": criterion_fluid_model,
    "stationary-mean": criterion_stationary_mean,
    "diffusion-stationary": criterion_diffusion_stationary,
    "closed-form": criterion_closed_form,
    "sde-ode": criterion_sde_ode,
    "scheme-a": criterion_scheme_a,
    "time-varying": criterion_time_varying,
    "reflection": criterion_reflection,
}


def run_suites(names) -> list[CriterionResult]:
    results = []
    for name in names:
        if name not in ALL_CRITERIA:
            known = ", ".join(ALL_CRITERIA)
            raise KeyError(f"unknown acceptance suite {name!r}; known: {known}")
        results.append(ALL_CRITERIA[name]())
    return results
