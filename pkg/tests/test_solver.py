import numpy as np
import pytest

from becvortex import basis
from becvortex.closed_form import VortexConfig, ideal_single_vortex
from becvortex.field import ComplexField2D, GridSpec, energy, norm, normalize
from becvortex.solver import (
    SolverError,
    SolverParams,
    StationaryStates,
    build_initial_state,
    central_vortex_state,
    evolve_scenario,
    ground_state,
    imaginary_time,
    step_realtime,
    vortex_background_factor,
)
from becvortex.tracking import detect

G64 = GridSpec(8.0, 64)


def l2(a, b):
    return float(np.sqrt(np.sum(np.abs(a.values - b.values) ** 2)) * a.grid.spacing)


def test_params_validation():
    with pytest.raises(ValueError):
        SolverParams(dt=0.0)
    with pytest.raises(ValueError):
        SolverParams(it_tol=-1.0)
    assert SolverParams(dt=1e-3, stride=0.01).steps_per_snapshot == 10


def test_single_vortex_quarter_turn():
    g = GridSpec(8.0, 128)
    f = normalize(ComplexField2D.from_function(g, lambda X, Y: ideal_single_vortex(1.0, 0.0, X, Y)))
    p = SolverParams(dt=1e-3)
    out = step_realtime(f, p, int(round(np.pi / 2 / p.dt)))
    (v,) = detect(out)
    # the step count lands within dt/2 of pi/2
    assert np.hypot(v.x - np.cos(out.time), v.y - np.sin(out.time)) < 0.01
    assert np.hypot(v.x, v.y - 1) < 0.01


def test_nonfinite_field_aborts():
    f = ComplexField2D(G64, np.full((64, 64), np.nan + 0j))
    with pytest.raises(SolverError, match="non-finite"):
        step_realtime(f, SolverParams(grid=G64))


def test_ground_state_beta0():
    gs = ground_state(SolverParams(grid=G64))
    X, Y = G64.mesh()
    exact = np.exp(-(X**2 + Y**2) / 2) / np.sqrt(np.pi)
    assert energy(gs, 0.0) == pytest.approx(1.0, abs=1e-6)
    assert np.abs(gs.values - exact).max() < 1e-6


def test_ground_state_beta1_bounds(states_small):
    gs = states_small(1.0).ground
    e = energy(gs, 1.0)
    s2 = np.sqrt((1 + 2 * np.pi) / (2 * np.pi))
    assert 1.0 <= e <= s2


def test_imaginary_time_monotone():
    p = SolverParams(beta=1.0, grid=G64)
    X, Y = G64.mesh()
    seed = np.exp(-((X - 0.5) ** 2 + Y**2)).astype(complex)
    _, hist = imaginary_time(seed, p, 1e-2)
    assert np.all(np.diff(hist) <= 1e-12 * abs(hist[0]))


def test_imaginary_time_gives_up():
    p = SolverParams(grid=G64, it_max_steps=3)
    X, Y = G64.mesh()
    with pytest.raises(SolverError) as err:
        imaginary_time(np.exp(-(X**2 + Y**2)).astype(complex), p, 1e-2)
    assert len(err.value.history) >= 1


def test_central_vortex_beta0():
    v = central_vortex_state(SolverParams(grid=G64))
    assert energy(v, 0.0) == pytest.approx(2.0, abs=1e-5)
    X, Y = G64.mesh()
    exact = normalize(ComplexField2D(G64, (X + 1j * Y) * np.exp(-(X**2 + Y**2) / 2)))
    assert l2(v, exact) < 1e-5


def test_central_vortex_beta1(states_small):
    p = SolverParams(beta=1.0, grid=G64)
    v = central_vortex_state(p)
    (o,) = detect(v, beta=1.0)
    assert o.charge == 1 and np.hypot(o.x, o.y) < 1e-6
    with pytest.raises(ValueError):
        central_vortex_state(p, q=2)


def test_background_factor_beta0(states_small):
    st = states_small(0.0)
    p = SolverParams(grid=G64)
    pq, prof = vortex_background_factor(p, 1, st.ground)
    X, Y = G64.mesh()
    r = np.hypot(X, Y)
    core = (r < 4.0) & (r > 0)
    ratio = pq.values[core] / (X + 1j * Y)[core]
    assert np.ptp(np.abs(ratio)) < 1e-5 * np.abs(ratio).mean()


def test_background_factor_linear_near_origin(states_small):
    prof = states_small(1.0).profile
    r = np.array([0.05, 0.1, 0.2])
    vals = np.abs(prof(r, 0 * r))
    slopes = vals / r
    assert np.ptp(slopes) < 0.02 * slopes.mean()
    assert np.abs(prof(np.array([3.0]), np.array([0.0])))[0] > np.abs(prof(np.array([1.0]), np.array([0.0])))[0]


def test_build_initial_state(states_small):
    st = states_small(0.0)
    p = SolverParams(grid=G64)
    empty = build_initial_state(VortexConfig(()), p, st)
    assert l2(empty, st.ground) < 1e-12
    f = build_initial_state(VortexConfig.named("single", 0.7), p, st)
    exact = normalize(ComplexField2D.from_function(G64, lambda X, Y: ideal_single_vortex(0.7, 0.0, X, Y)))
    assert l2(f, exact) < 1e-5
    assert norm(f) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError, match="r_edge"):
        build_initial_state(VortexConfig.named("single", 4.5), p, st)


def test_stationary_states_cached():
    p = SolverParams(grid=G64)
    assert StationaryStates.compute(p) is StationaryStates.compute(p)


def test_evolve_scenario_trivial(states_small):
    f = states_small(0.0).ground
    rec = evolve_scenario(f, SolverParams(grid=G64), 0.0)
    assert len(rec.times) == 1 and rec.snapshots[0] is f
    man = rec.manifest()
    assert man["params"]["points"] == 64 and len(man["snapshots"]) == 1


def test_norm_conservation_long():
    g = GridSpec(8.0, 64)
    f = normalize(ComplexField2D.from_function(g, lambda X, Y: ideal_single_vortex(1.0, 0.0, X, Y)))
    out = step_realtime(f, SolverParams(beta=1.0, grid=g), 10_000)
    assert abs(norm(out) - 1.0) < 1e-10


def test_second_order_in_dt():
    g = GridSpec(8.0, 64)
    f = normalize(ComplexField2D.from_function(g, lambda X, Y: ideal_single_vortex(1.0, 0.0, X, Y)))
    T = 1.0
    run = lambda dt: step_realtime(f, SolverParams(dt=dt, beta=2.0, grid=g), int(round(T / dt)))
    ref = run(0.1 / 8 / 8)
    e1, e2 = l2(run(0.1), ref), l2(run(0.05), ref)
    assert e1 / e2 == pytest.approx(4.0, rel=0.2)


def test_matches_basis_evolution_beta0():
    g = GridSpec(8.0, 64)
    cfg = VortexConfig.named("tripole", np.sqrt(2))
    P = cfg.polynomial()
    s0 = basis.polynomial_state({(i, j): v for (i, j), v in np.ndenumerate(P) if v != 0}, 0.0)
    f0 = basis.synthesize(s0, g)
    scale = 1 / norm(f0)
    t = 1.0
    # the splitting error scales as dt^2; dt = 1e-4 puts it near 5e-9 per unit time
    num = step_realtime(f0 * scale, SolverParams(dt=1e-4, grid=g), int(round(t / 1e-4)))
    ref = basis.synthesize(basis.evolve(s0, t), g) * scale
    assert l2(num, ref) <= 1e-8 * t
