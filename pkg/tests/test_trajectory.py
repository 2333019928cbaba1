import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from jetcodesign.errors import DegenerateDuration, MalformedFile
from jetcodesign.trajectory import (Waypoint, build_trajectory, default_waypoints, hover_trajectory,
                                    load_trajectory_csv, load_waypoints, min_jerk_segment, poly_eval,
                                    save_trajectory_csv, segment_durations_from_speed)

vec = st.lists(st.floats(-5, 5), min_size=3, max_size=3)


def test_stationary_segment_is_constant():
    c = min_jerk_segment([1, 2, 3], [1, 2, 3], [0] * 3, [0] * 3, [0] * 3, [0] * 3, 2.0)
    assert np.allclose(c[:, 1:], 0, atol=1e-15)
    assert np.allclose(c[:, 0], [1, 2, 3])


def test_degenerate_duration():
    with pytest.raises(DegenerateDuration):
        min_jerk_segment([0] * 3, [1] * 3, [0] * 3, [0] * 3, [0] * 3, [0] * 3, 0.0)


@given(p0=vec, p1=vec, v0=vec, v1=vec, a0=vec, a1=vec, T=st.floats(0.2, 10))
def test_boundary_conditions_exact(p0, p1, v0, v1, a0, a1, T):
    c = min_jerk_segment(p0, p1, v0, v1, a0, a1, T)
    scale = 1 + max(map(abs, p0 + p1 + v0 + v1 + a0 + a1))
    for order, start, end in ((0, p0, p1), (1, v0, v1), (2, a0, a1)):
        assert np.allclose(poly_eval(c, 0.0, order)[0], start, atol=1e-9 * scale)
        assert np.allclose(poly_eval(c, T, order)[0], end, atol=1e-9 * scale)


@given(p0=vec, p1=vec, T=st.floats(0.2, 10))
def test_rest_to_rest_midpoint_and_peak_speed(p0, p1, T):
    p0, p1 = np.array(p0), np.array(p1)
    c = min_jerk_segment(p0, p1, [0] * 3, [0] * 3, [0] * 3, [0] * 3, T)
    assert np.allclose(poly_eval(c, T / 2)[0], (p0 + p1) / 2, atol=1e-9 * (1 + np.abs(p0 - p1).max()))
    v_mid = poly_eval(c, T / 2, 1)[0]
    expected = 15 * (p1 - p0) / (8 * T)
    assert np.allclose(v_mid, expected, rtol=1e-9, atol=1e-12)
    ts = np.linspace(0, T, 2001)
    assert np.all(np.abs(poly_eval(c, ts, 1)).max(axis=0) <= np.abs(expected) * (1 + 1e-9) + 1e-12)


def test_single_segment_samples():
    wps = [Waypoint((0.0, 0.0, 0.0)), Waypoint((1.0, 0.0, 0.0))]
    tr = build_trajectory(wps, [2.0], 0.1)
    assert len(tr) == 21
    k = int(np.argmax(tr.v_ref[:, 0]))
    assert math.isclose(tr.t[k], 1.0, abs_tol=1e-12)
    assert math.isclose(tr.v_ref[k, 0], 0.9375, rel_tol=1e-12)


def test_coincident_waypoints():
    tr = hover_trajectory((1.0, 2.0, 3.0), 1.0, 0.1)
    assert np.all(tr.x_ref == [1.0, 2.0, 3.0])
    assert np.all(tr.v_ref == 0.0)


def test_junction_continuity():
    wps = [Waypoint((0, 0, 0), (1, 0, 0), 0.0), Waypoint((2, 1, 0), (1, 0, 0), 0.8),
           Waypoint((3, 3, 1), (0, 1, 0), 0.0)]
    segs = [min_jerk_segment(a.position, b.position, a.velocity, b.velocity, [0] * 3, [0] * 3, T)
            for a, b, T in zip(wps[:-1], wps[1:], (2.5, 3.0))]
    for order in range(3):
        left = poly_eval(segs[0], 2.5, order)[0]
        right = poly_eval(segs[1], 0.0, order)[0]
        assert np.abs(left - right).max() < 1e-9


def test_default_circuit_properties(circuit):
    wps = default_waypoints()
    total = sum(segment_durations_from_speed(wps, 1.0))
    assert len(circuit) == math.ceil(total / 0.1 - 1e-9) + 1
    assert np.allclose(circuit.x_ref[0], wps[0].position, atol=1e-9)
    assert np.allclose(circuit.x_ref[-1], wps[-1].position, atol=1e-9)
    assert np.all(circuit.v_ref[0] == 0) and np.all(circuit.v_ref[-1] == 0)
    # central difference of x matches v to O(dt^2)
    fd = (circuit.x_ref[2:] - circuit.x_ref[:-2]) / 0.2
    assert np.abs(fd - circuit.v_ref[1:-1]).max() < 0.02


def test_waypoint_validation():
    with pytest.raises(ValueError):
        Waypoint((0, 0, 0), (1, 1, 0))
    with pytest.raises(ValueError):
        Waypoint((0, 0, 0), (1, 0, 0), -1.0)


def test_csv_round_trip_and_byte_identity(tmp_path, circuit):
    save_trajectory_csv(circuit, tmp_path / "a.csv", {"seed": 1})
    save_trajectory_csv(circuit, tmp_path / "b.csv", {"seed": 1})
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    back, prov = load_trajectory_csv(tmp_path / "a.csv")
    assert prov == {"seed": 1}
    assert np.array_equal(back.x_ref, circuit.x_ref) and np.array_equal(back.v_ref, circuit.v_ref)


def test_csv_malformed(tmp_path):
    (tmp_path / "bad.csv").write_text("t,x,y,z,vx,vy,vz\n0,1,2,oops,0,0,0\n")
    with pytest.raises(MalformedFile) as exc:
        load_trajectory_csv(tmp_path / "bad.csv")
    assert exc.value.line == 2


def test_load_waypoints(tmp_path):
    import json
    data = [w.to_dict() for w in default_waypoints()]
    (tmp_path / "w.json").write_text(json.dumps({"waypoints": data}))
    back = load_waypoints(tmp_path / "w.json")
    assert len(back) == len(default_waypoints())
    for a, b in zip(back, default_waypoints()):
        assert np.allclose(a.position, b.position) and np.allclose(a.direction_cue, b.direction_cue)
        assert a.dwell_speed == b.dwell_speed
