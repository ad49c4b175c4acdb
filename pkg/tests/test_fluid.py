import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from invitesim.fluid import (
    BoundarySegment,
    DriftReport,
    FluidSolverError,
    FluidState,
    InteriorSegment,
    InvalidInitial,
    boundary_hit_time,
    drift_check,
    interior_solution,
    solve_fluid,
    solve_fluid_tv,
)
from invitesim.params import (
    ConstantArrival,
    ModelParams,
    PiecewiseConstantArrival,
    SinusoidArrival,
    spectral_decompose,
)

BASE = ModelParams(lam=1.0, scale_r=1000.0, beta=1.0, gamma=2.0, epsilon=0.2)
SPEC = spectral_decompose(BASE)

# frozen reference values, computed once with an adaptive integrator at
# rtol=1e-12 and an independent root find on the mode expansion
INTERIOR_T1 = (0.8378596943444442, 0.21235372533369046)
INTERIOR_T5 = (0.6594014428010676, -0.06946092890703415)
HIT_T = 0.059087715994052
HIT_Y = 17.943805223476534
BDUR = 7.943805223476492
EXIT_T = 8.002892939470561


def _reference_ivp(initial, t_end, params=BASE):
    def rhs(t, u):
        y, x = u
        return [params.beta * x, -params.epsilon * y - params.gamma * params.beta * x]

    return solve_ivp(rhs, (0.0, t_end), list(initial), rtol=1e-12, atol=1e-14,
                     dense_output=True)


def test_interior_solution_frozen_values():
    s1 = interior_solution(FluidState(0.0, 2.0), 1.0, SPEC)
    assert s1.y == pytest.approx(INTERIOR_T1[0], abs=1e-10)
    assert s1.x == pytest.approx(INTERIOR_T1[1], abs=1e-10)
    s5 = interior_solution(FluidState(0.0, 2.0), 5.0, SPEC)
    assert s5.y == pytest.approx(INTERIOR_T5[0], abs=1e-10)
    assert s5.x == pytest.approx(INTERIOR_T5[1], abs=1e-10)


def test_interior_matches_adaptive_reference():
    sol = _reference_ivp((0.0, 2.0), 30.0)
    ts = np.linspace(0.0, 30.0, 121)
    traj = solve_fluid((0.0, 2.0), BASE, horizon=30.0)
    got = traj.states(ts)
    want = sol.sol(ts).T
    assert np.max(np.abs(got - want)) < 1e-9


def test_no_hit_from_small_state():
    assert boundary_hit_time(FluidState(0.0, 2.0), BASE, SPEC) is None
    traj = solve_fluid((0.0, 2.0), BASE, horizon=200.0)
    assert len(traj.segments) == 1
    assert traj.boundary_segments == 0


def test_boundary_hit_frozen_values():
    t_hit = boundary_hit_time(FluidState(18.0, -0.9), BASE, SPEC)
    assert t_hit == pytest.approx(HIT_T, abs=1e-11)
    at_hit = interior_solution(FluidState(18.0, -0.9), t_hit, SPEC)
    assert at_hit.y == pytest.approx(HIT_Y, abs=1e-9)
    assert at_hit.x == pytest.approx(-1.0, abs=1e-10)


def test_three_segment_structure():
    traj = solve_fluid((18.0, -0.9), BASE, horizon=50.0)
    kinds = [s.kind for s in traj.segments]
    assert kinds == ["interior", "boundary", "interior"]
    seg_b = traj.segments[1]
    assert seg_b.t0 == pytest.approx(HIT_T, abs=1e-10)
    assert seg_b.duration == pytest.approx(BDUR, abs=1e-8)
    assert seg_b.y_start == pytest.approx(HIT_Y, abs=1e-9)
    # departs the floor exactly at y = gamma*lam/epsilon
    st_exit = traj.state(EXIT_T)
    assert st_exit[0] == pytest.approx(BASE.boundary_exit_y, abs=1e-7)
    assert st_exit[1] == pytest.approx(-1.0, abs=1e-9)
    # mid-slide the state moves down the floor at speed lam
    mid = traj.state(4.0)
    assert mid[0] == pytest.approx(HIT_Y - BASE.lam * (4.0 - HIT_T), abs=1e-8)
    assert mid[1] == -1.0
    # after lift-off the tail agrees with the adaptive reference restarted
    # from the exit corner
    tail = _reference_ivp((BASE.boundary_exit_y, -1.0), 50.0 - EXIT_T)
    for dt_after in (1.0, 5.0, 20.0):
        got = traj.state(EXIT_T + dt_after)
        want = tail.sol(dt_after)
        assert np.allclose(got, want, atol=1e-6)


def test_horizon_truncates_boundary_segment():
    traj = solve_fluid((18.0, -0.9), BASE, horizon=4.0)
    assert [s.kind for s in traj.segments] == ["interior", "boundary"]
    end = traj.state(4.0)
    assert end[0] == pytest.approx(HIT_Y - BASE.lam * (4.0 - HIT_T), abs=1e-8)
    assert end[1] == -1.0


def test_on_floor_start_slides_then_lifts():
    traj = solve_fluid((15.0, -1.0), BASE, horizon=20.0)
    assert traj.segments[0].kind == "boundary"
    # slide time (15 - 10)/lam exactly
    assert traj.segments[0].duration == pytest.approx(5.0, abs=1e-12)
    assert np.allclose(traj.state(3.0), [12.0, -1.0], atol=1e-12)
    tail = _reference_ivp((10.0, -1.0), 15.0)
    assert np.allclose(traj.state(8.0), tail.sol(3.0), atol=1e-8)


def test_on_floor_start_below_exit_lifts_immediately():
    # at (5, -1) the inflow already dominates, so no slide happens
    traj = solve_fluid((5.0, -1.0), BASE, horizon=30.0)
    assert traj.boundary_segments == 0
    ref = _reference_ivp((5.0, -1.0), 30.0)
    ts = np.linspace(0.5, 30.0, 60)
    assert np.max(np.abs(traj.states(ts) - ref.sol(ts).T)) < 1e-8


def test_invalid_initial_below_floor():
    with pytest.raises(InvalidInitial):
        solve_fluid((0.0, -1.5), BASE, horizon=1.0)


def test_bad_horizon():
    with pytest.raises(FluidSolverError):
        solve_fluid((0.0, 2.0), BASE, horizon=0.0)


def test_states_match_scalar_eval():
    traj = solve_fluid((18.0, -0.9), BASE, horizon=50.0)
    ts = np.array([0.0, 0.03, HIT_T + 1.0, 7.9, 8.5, 25.0, 50.0])
    block = traj.states(ts)
    for i, t in enumerate(ts):
        assert np.array_equal(block[i], traj.state(t))
    with pytest.raises(FluidSolverError):
        traj.states([60.0])


def test_segment_summary_and_csv(tmp_path):
    traj = solve_fluid((18.0, -0.9), BASE, horizon=50.0)
    summ = traj.segment_summary()
    assert [d["kind"] for d in summ] == ["interior", "boundary", "interior"]
    assert summ[1]["y_start"] == pytest.approx(HIT_Y, abs=1e-9)
    assert sum(d["duration"] for d in summ) == pytest.approx(50.0, abs=1e-9)
    out = tmp_path / "fluid.csv"
    traj.to_csv(out, dt=0.5)
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "t,y,x,segment_kind"
    assert len(lines) == 102
    row = lines[11].split(",")  # t = 5.0, mid-slide
    assert row[3] == "boundary"
    assert float(row[2]) == -1.0


def test_drift_check_interior_rates():
    traj = solve_fluid((0.0, 2.0), BASE, horizon=40.0)
    rep = drift_check(traj)
    assert isinstance(rep, DriftReport)
    assert rep.points_checked > 1000
    assert rep.boundary_drift_max is None
    # the two modes decay at nu1 and nu2; any mixture sits in between
    assert rep.interior_ratio_min >= SPEC.nu1 - 1e-5
    assert rep.interior_ratio_max <= SPEC.nu2 + 1e-5


def test_drift_check_boundary_negative():
    traj = solve_fluid((18.0, -0.9), BASE, horizon=50.0)
    rep = drift_check(traj)
    assert rep.boundary_segments == 1
    assert rep.boundary_drift_max < 0.0
    assert rep.interior_ratio_min >= SPEC.nu1 - 1e-5


@st.composite
def stable_params(draw):
    beta = draw(st.floats(0.2, 4.0))
    gamma = draw(st.floats(0.5, 5.0))
    frac = draw(st.floats(0.05, 0.95))
    eps = frac * gamma * gamma * beta / 4.0
    lam = draw(st.floats(0.2, 3.0))
    return ModelParams(lam=lam, scale_r=100.0, beta=beta, gamma=gamma, epsilon=eps)


@settings(max_examples=60, deadline=None)
@given(params=stable_params(),
       y0=st.floats(-30.0, 30.0),
       xoff=st.floats(0.0, 20.0))
def test_hit_time_is_first_floor_crossing(params, y0, xoff):
    spec = spectral_decompose(params)
    floor = -params.lam / params.beta
    initial = FluidState(y0, floor + xoff)
    t_hit = boundary_hit_time(initial, params, spec)
    probe_end = t_hit if t_hit is not None else 12.0 / spec.nu1
    ts = np.linspace(0.0, probe_end, 2000, endpoint=False)
    xs = np.array([interior_solution(initial, t, spec).x for t in ts])
    # strictly above the floor before the reported hit (or everywhere)
    assert np.all(xs > floor - 1e-7)
    if t_hit is not None:
        at = interior_solution(initial, t_hit, spec)
        assert abs(at.x - floor) < 1e-9
        # crossings only happen while the outflow still dominates
        assert at.y >= params.boundary_exit_y - 1e-6


@settings(max_examples=25, deadline=None)
@given(params=stable_params(), y0=st.floats(-20.0, 40.0), xoff=st.floats(0.0, 10.0))
def test_solver_path_respects_floor_and_is_continuous(params, y0, xoff):
    floor = -params.lam / params.beta
    traj = solve_fluid((y0, floor + xoff), params, horizon=30.0)
    ts = np.linspace(0.0, 30.0, 601)
    vals = traj.states(ts)
    assert np.all(vals[:, 1] >= floor - 1e-7)
    steps = np.abs(np.diff(vals, axis=0))
    # both coordinates have bounded speed, so adjacent samples stay close
    speed = (abs(y0) + xoff + params.lam / params.beta + 1.0) * (
        params.beta + params.gamma * params.beta + params.epsilon + params.lam)
    assert steps.max() <= speed * (ts[1] - ts[0]) * 5 + 1e-9


# --- time-varying integrator ------------------------------------------------

def test_tv_constant_rate_matches_closed_form():
    # uncentered coordinates shift the floor to 0
    shift = BASE.lam / BASE.beta
    tv = solve_fluid_tv((18.0, -0.9 + shift), ConstantArrival(1.0), BASE,
                        horizon=12.0, dt=1e-3)
    cf = solve_fluid((18.0, -0.9), BASE, horizon=12.0)
    ts = np.linspace(0.0, 12.0, 49)
    got = tv.states(ts)
    want = cf.states(ts)
    want[:, 1] += shift
    assert np.max(np.abs(got - want)) < 2e-5
    # the slide phase is flagged
    assert tv.states([4.0])[0][1] == pytest.approx(0.0, abs=1e-9)


def test_tv_on_floor_slide_duration():
    shift = BASE.lam / BASE.beta
    tv = solve_fluid_tv((30.0, 0.0), ConstantArrival(1.0), BASE, horizon=30.0, dt=1e-3)
    cf = solve_fluid((30.0, -shift), BASE, horizon=30.0)
    ts = np.linspace(0.0, 30.0, 121)
    want = cf.states(ts)
    want[:, 1] += shift
    assert np.max(np.abs(tv.states(ts) - want)) < 5e-5
    assert tv.state(10.0)[0] == pytest.approx(20.0, abs=1e-9)


def test_tv_smooth_sinusoid_against_adaptive_reference():
    arr = SinusoidArrival(base=1.0, amplitude=0.2, period=120.0)
    params = BASE

    def rhs(t, u):
        y, x = u
        lt = arr(t)
        return [params.beta * x - lt,
                params.gamma * lt - params.gamma * params.beta * x - params.epsilon * y]

    sol = solve_ivp(rhs, (0.0, 200.0), [0.0, 1.0], rtol=1e-11, atol=1e-12,
                    dense_output=True)
    assert sol.sol(np.linspace(0, 200, 500))[1].min() > 0.1  # stays interior
    tv = solve_fluid_tv((0.0, 1.0), arr, params, horizon=200.0, dt=1e-3)
    ts = np.linspace(0.0, 200.0, 401)
    err = np.abs(tv.states(ts) - sol.sol(ts).T)
    assert err.max() < 1e-6


def test_tv_piecewise_jump_is_sharp():
    arr = PiecewiseConstantArrival(breakpoints=(5.0,), values=(1.0, 3.0))
    tv = solve_fluid_tv((0.0, 1.0), arr, BASE, horizon=10.0, dt=1e-3)

    def rhs(t, u):
        y, x = u
        lt = arr(t)
        return [BASE.beta * x - lt, BASE.gamma * lt - BASE.gamma * BASE.beta * x
                - BASE.epsilon * y]

    sol_a = solve_ivp(rhs, (0.0, 5.0), [0.0, 1.0], rtol=1e-11, atol=1e-12,
                      dense_output=True)
    sol_b = solve_ivp(rhs, (5.0 + 1e-12, 10.0), list(sol_a.sol(5.0)),
                      rtol=1e-11, atol=1e-12, dense_output=True)
    for t in (2.0, 4.999, 5.001, 7.0, 10.0):
        want = sol_a.sol(t) if t <= 5.0 else sol_b.sol(t)
        assert np.allclose(tv.state(t), want, atol=1e-6), t


def test_tv_rejects_bad_inputs():
    with pytest.raises(InvalidInitial):
        solve_fluid_tv((0.0, -0.5), None, BASE, horizon=1.0)
    with pytest.raises(FluidSolverError):
        solve_fluid_tv((0.0, 1.0), None, BASE, horizon=1.0, dt=0.0)


def test_tv_csv(tmp_path):
    tv = solve_fluid_tv((30.0, 0.0), None, BASE, horizon=2.0, dt=0.01)
    out = tmp_path / "tv.csv"
    tv.to_csv(out, every=10)
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "t,y,x,segment_kind"
    assert lines[1].endswith("boundary")
