import numpy as np
import pytest
from hypothesis import settings

from jetcodesign.design_space import (PARAM_NAMES, TABLE_I_RANGES, GeometricParams, RobotModel,
                                      Thruster, build_model, generate_registry)
from jetcodesign.trajectory import build_trajectory, default_waypoints, segment_durations_from_speed

settings.register_profile("ci", max_examples=40, deadline=None)
settings.load_profile("ci")


def zero_params():
    return GeometricParams(**{n: 0.0 for n in PARAM_NAMES})


def point_mass_model(thrusters, mass=10.0, inertia=np.eye(3)):
    """Hand-built model: thrusters given as (r, a) pairs, no joints."""
    ts = tuple(Thruster(r=np.asarray(r, float), a=np.asarray(a, float) / np.linalg.norm(a),
                        t_min=0.0, t_max=1000.0, omega_n=6.0, zeta=0.9,
                        dr_ds=np.zeros((3, 0)), da_ds=np.zeros((3, 0))) for r, a in thrusters)
    return RobotModel(model_id=0, params=zero_params(), mass=mass, com=np.zeros(3),
                      inertia=np.asarray(inertia, float), thrusters=ts,
                      mount_points=np.array([t.r for t in ts]))


@pytest.fixture(scope="session")
def baseline():
    return build_model(zero_params(), model_id=0)


@pytest.fixture(scope="session")
def small_registry():
    registry, _ = generate_registry(TABLE_I_RANGES, 40, seed=11)
    return registry


@pytest.fixture(scope="session")
def circuit():
    wps = default_waypoints()
    return build_trajectory(wps, segment_durations_from_speed(wps, 1.0), 0.1)


# ---- acceptance summary --------------------------------------------------

_ACCEPTANCE: dict[str, tuple[str, str, list]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        _ACCEPTANCE[name] = (report.outcome.upper(), report.nodeid, list(report.user_properties))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        outcome, _, props = _ACCEPTANCE[name]
        number = name.split("_")[2]
        label = " ".join(name.split("_")[3:])
        detail = ", ".join(f"{k}={v}" for k, v in props)
        terminalreporter.write_line(f"criterion {int(number):2d} {outcome:<7} {label}" + (f"  ({detail})" if detail else ""))
