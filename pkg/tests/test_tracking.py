import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from becvortex.closed_form import (
    SQRT2,
    VortexConfig,
    closed_form,
    dipole_annihilation_times,
    find_zeros,
    ideal_dipole_field,
    ideal_single_vortex,
    ideal_tripole_field,
    zeros_of_closed_form,
)
from becvortex.field import ComplexField2D, GridSpec
from becvortex.tracking import (
    CountSeries,
    VortexObservation,
    associate,
    average_count,
    count_series,
    detect,
    merge_unresolved,
    track_events,
    vortex_count,
    write_detections_csv,
    write_events_csv,
    write_tracks_json,
)

from .conftest import gaussian

G = GridSpec(8.0, 256)
X, Y = G.mesh()


def frames_of(fn, times, grid=G):
    gx, gy = grid.mesh()
    return [detect(ComplexField2D(grid, fn(t, gx, gy), t)) for t in times]


def test_detect_central_vortex():
    f = ComplexField2D.from_function(G, lambda X, Y: (X + 1j * Y) * np.exp(-(X**2 + Y**2) / 2))
    (o,) = detect(f)
    assert o.charge == 1
    assert np.hypot(o.x, o.y) <= G.spacing / 2


def test_detect_ground_state_empty():
    assert detect(ComplexField2D.from_function(G, gaussian)) == []


def test_detect_tripole_five():
    t = 0.2 * np.pi
    got = detect(ComplexField2D(G, ideal_tripole_field(SQRT2, t, X, Y), t))
    ref = zeros_of_closed_form("tripole", SQRT2, 0.0, t)
    assert len(got) == 5
    for p, q in zip(ref.positions, ref.charges):
        d = min(np.hypot(p[0] - o.x, p[1] - o.y) for o in got if o.charge == q)
        assert d < 0.02


def test_detect_double_zero_splits_into_unit_charges():
    # one cell cannot wind by two with principal-branch edges; a double zero
    # shows up as unit charges in neighbouring cells with the total kept
    h = G.spacing
    f = ComplexField2D.from_function(G, lambda X, Y: ((X - h / 3) + 1j * (Y - h / 4)) ** 2 * np.exp(-(X**2 + Y**2) / 2))
    obs = detect(f)
    assert sum(o.charge for o in obs) == 2
    assert all(o.charge == 1 and np.hypot(o.x, o.y) < 2 * h for o in obs)


def _as_array(obs):
    return np.array(sorted((o.x, o.y, o.charge) for o in obs))


def test_detect_phase_invariance_and_conjugation():
    t = 0.2 * np.pi
    f = ComplexField2D(G, ideal_tripole_field(SQRT2, t, X, Y), t)
    base = _as_array(detect(f))
    assert len(base) == 5
    rot = _as_array(detect(f * np.exp(0.9j)))
    assert np.abs(rot - base).max() < 1e-9
    conj = _as_array(detect(f.conj()))
    assert np.abs(conj[:, :2] - base[:, :2]).max() < 1e-9
    assert np.array_equal(conj[:, 2], -base[:, 2])


def test_detection_disc():
    f = ComplexField2D.from_function(G, lambda X, Y: (X - 2 + 1j * Y) * np.exp(-(X**2 + Y**2) / 2))
    assert len(detect(f)) == 1
    assert detect(f, r_edge=1.5) == []
    assert vortex_count(f) == 1


def test_count_series_dipole_window():
    x0 = 0.5
    ta, tr = dipole_annihilation_times(x0)
    stride = 0.01
    times = np.round(np.arange(0, 3.2, stride), 10)
    frames = frames_of(lambda t, x, y: ideal_dipole_field(x0, t, x, y), times)
    cs = count_series(frames, times, 0)
    inside = (times > ta + 2 * stride) & (times < tr - 2 * stride)
    outside = (times < ta - 2 * stride) | (times > tr + 2 * stride)
    assert np.all(cs.counts[inside] == 0)
    assert np.all(cs.counts[outside] == 2)
    assert not cs.flags


def test_count_series_flags():
    obs = [VortexObservation(0.0, 0, 0, 1)]
    cs = count_series([obs, [], obs + [VortexObservation(0.1, 1, 0, 1)]], [0.0, 0.1, 0.2], total_charge=1)
    assert [k for k, _ in cs.flags] == [1, 2]


def test_average_count():
    cs = CountSeries(np.linspace(0, 20, 101), np.full(101, 3))
    assert average_count(cs, (0, 20)) == pytest.approx(3.0, abs=1e-12)
    cs = CountSeries(np.array([0.0, 1.0, 2.0]), np.array([1, 3, 3]))
    assert average_count(cs) == pytest.approx(2.5)
    with pytest.raises(ValueError):
        average_count(cs, (5.0, 6.0))


def test_associate_single_circle():
    times = np.round(np.arange(0, 2 * np.pi, 0.02), 10)
    frames = frames_of(lambda t, x, y: ideal_single_vortex(1.0, t, x, y), times, GridSpec(8.0, 128))
    a = associate(frames, times)
    assert len(a.tracks) == 1
    tr = a.tracks[0]
    assert tr.birth == "initial" and tr.death == "end-of-run"
    r = np.hypot(*tr.positions().T)
    assert np.abs(r - 1).max() < 0.02


def test_associate_dipole_annihilation_and_creation():
    x0 = 0.5
    ta, tr_ = dipole_annihilation_times(x0)
    times = np.round(np.arange(0, 3.2, 0.01), 10)
    frames = frames_of(lambda t, x, y: ideal_dipole_field(x0, t, x, y), times, GridSpec(8.0, 128))
    a = associate(frames, times)
    ends = [t for t in a.tracks if t.death == "annihilation"]
    starts = [t for t in a.tracks if t.birth == "creation"]
    assert len(ends) == 2 and len(starts) == 2
    assert ends[0].death_partner == ends[1].id
    assert starts[0].birth_partner == starts[1].id
    assert abs(ends[0].end - ta) < 0.03
    assert abs(starts[0].start - tr_) < 0.03
    kinds = [e.kind for e in track_events(a)]
    assert kinds.count("annihilation") == 1 and kinds.count("creation") == 1


def test_associate_tripole_creations_at_origin():
    times = np.round(np.arange(0, 2 * np.pi, 0.01), 10)
    frames = frames_of(lambda t, x, y: ideal_tripole_field(SQRT2, t, x, y), times, GridSpec(8.0, 128))
    ev = track_events(associate(frames, times))
    created = [e for e in ev if e.kind == "creation"]
    assert len(created) == 2
    for e, k in zip(created, range(2)):
        assert abs(e.t - (np.pi / 6 + k * np.pi)) < 0.03
        assert np.hypot(e.x, e.y) < 0.1
    gone = [e for e in ev if e.kind == "annihilation"]
    assert len(gone) == 2
    for e, k in zip(gone, range(2)):
        assert abs(e.t - (5 * np.pi / 6 + k * np.pi)) < 0.03
        assert np.hypot(e.x, e.y) < 0.1


def test_charge_sum_and_parity_every_frame():
    times = np.linspace(0, np.pi, 40)
    for fam in ("dipole", "tripole"):
        cf = closed_form(fam, 1.3, 1.0)
        Q = VortexConfig.named(fam, 1.3).total_charge
        for t in times:
            obs = detect(ComplexField2D(G, cf(X, Y, t), t), beta=1.0)
            assert sum(o.charge for o in obs) == Q
            assert (len(obs) - Q) % 2 == 0


def test_writers(tmp_path):
    times = [0.0, 0.1]
    frames = [[VortexObservation(0.0, 1.0, 0.0, 1)], [VortexObservation(0.1, 1.0, 0.1, 1)]]
    write_detections_csv(frames, tmp_path / "d.csv")
    rows = list(csv.DictReader(open(tmp_path / "d.csv")))
    assert rows[1]["y"] == "0.1" and rows[0]["charge"] == "1"
    a = associate(frames, times)
    write_tracks_json(a, tmp_path / "t.json")
    doc = json.loads((tmp_path / "t.json").read_text())
    assert doc["tracks"][0]["birth"]["kind"] == "initial"
    assert len(doc["tracks"][0]["observations"]) == 2
    write_events_csv(track_events(a), tmp_path / "e.csv")
    assert open(tmp_path / "e.csv").readline().strip() == "t,event_type,x,y"
    cs = count_series(frames, times)
    cs.to_csv(tmp_path / "c.csv")
    back = CountSeries.from_csv(tmp_path / "c.csv")
    assert back.counts.tolist() == [1, 1]


vortex = st.tuples(st.floats(-2.5, 2.5), st.floats(-2.5, 2.5), st.sampled_from([1, -1]))


@settings(max_examples=30, deadline=None)
@given(st.lists(vortex, min_size=1, max_size=4))
def test_detector_matches_polynomial_zeros(vs):
    pts = np.array([(x, y) for x, y, _ in vs])
    d = np.hypot(*(pts[:, None] - pts[None]).transpose(2, 0, 1))
    np.fill_diagonal(d, np.inf)
    if d.min() < 0.3:
        return
    cfg = VortexConfig(tuple(vs))
    C = cfg.polynomial()
    g = GridSpec(8.0, 128)
    gx, gy = g.mesh()
    from numpy.polynomial import polynomial as npoly

    f = ComplexField2D(g, npoly.polyval2d(gx, gy, C) * np.exp(-(gx**2 + gy**2) / 2))
    got = detect(f, r_edge=3.8)
    ref = find_zeros(C, 3.8)
    assert len(got) == ref.count
    for p, q in zip(ref.positions, ref.charges):
        dist = min(np.hypot(p[0] - o.x, p[1] - o.y) for o in got if o.charge == q)
        assert dist < g.spacing / 2


def test_merge_unresolved():
    obs = [
        VortexObservation(0.0, 0.0, 0.0, 1),
        VortexObservation(0.0, 1.0, 0.0, 1),
        VortexObservation(0.0, 1.02, 0.01, -1),
        VortexObservation(0.0, -1.0, 0.0, -1),
    ]
    kept = merge_unresolved(obs, 0.05)
    assert [(o.x, o.charge) for o in kept] == [(0.0, 1), (-1.0, -1)]
    assert merge_unresolved(obs, 0.01) == obs
    assert sum(o.charge for o in kept) == sum(o.charge for o in obs)
