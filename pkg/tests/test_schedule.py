import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cyclerl.schedule import ScheduleKind, ScheduleSpec, cap_at, dump_curve, raw_cap, write_curve_csv


def oracle_cap(kind, l_max, l_min, T, t):
    """Independent evaluator in cycle-fraction units with integer case tests."""
    r = t % T
    s = r / T
    mid, amp = (l_max + l_min) / 2, (l_max - l_min) / 2
    if kind == "cosine":
        x = mid + amp * np.cos(2 * np.pi * s)
    elif kind == "stair":
        x = l_max if 2 * r < T else l_min
    else:
        if 8 * r < T or 8 * r >= 7 * T:
            x = l_max
        elif 8 * r < 3 * T:
            x = mid + amp * np.cos(4 * np.pi * s - np.pi / 2)
        elif 8 * r < 5 * T:
            x = l_min
        else:
            x = mid + amp * np.cos(4 * np.pi * s - 3 * np.pi / 2)
    return int(np.floor(x + 0.5))


LARGE_RUN = dict(l_max=16384, l_min=8192, cycle_len=640)


@pytest.mark.parametrize(
    "kind,t,expected",
    [
        ("cosine", 0, 16384),
        ("cosine", 320, 8192),
        ("cosine", 160, 12288),
        ("stair_cosine", 160, 12288),
        ("stair_cosine", 320, 8192),
        ("stair", 100, 16384),
        ("stair", 420, 8192),
    ],
)
def test_cap_examples(kind, t, expected):
    assert cap_at(ScheduleSpec(kind, **LARGE_RUN), t) == expected


def test_dump_curve_quarter_phases():
    spec = ScheduleSpec("cosine", 100, 50, 4)
    assert dump_curve(spec, 5) == [(0, 100), (1, 75), (2, 50), (3, 75), (4, 100)]


def test_dump_curve_single_step():
    spec = ScheduleSpec("stair", 9, 3, 7)
    assert dump_curve(spec, 1) == [(0, cap_at(spec, 0))]


def test_stair_cosine_small_cycle_shape():
    spec = ScheduleSpec("stair_cosine", 80, 40, 8)
    caps = [c for _, c in dump_curve(spec, 8)]
    # phi = t*pi/4: plateau, descent, plateau, ascent
    assert caps[0] == caps[1] == 80
    assert caps[2] == 60
    assert caps[3] == caps[4] == 40
    assert caps[5] == 40
    assert caps[6] == 60
    assert caps[7] == 80


def test_spec_validation():
    with pytest.raises(ValueError):
        ScheduleSpec("cosine", 10, 20, 8)
    with pytest.raises(ValueError):
        ScheduleSpec("cosine", 10, 0, 8)
    with pytest.raises(ValueError):
        ScheduleSpec("cosine", 10, 5, 1)
    with pytest.raises(ValueError):
        ScheduleSpec("triangle", 10, 5, 8)
    with pytest.raises(ValueError):
        dump_curve(ScheduleSpec("cosine", 10, 5, 8), 0)


@pytest.mark.parametrize("boundary", [1, 3, 5, 7])
def test_stair_cosine_boundary_continuity(boundary):
    # at phi = boundary*pi/4 the neighbouring cases agree before rounding
    l_max, l_min = 16384.0, 8192.0
    mid, amp = (l_max + l_min) / 2, (l_max - l_min) / 2
    phi = boundary * math.pi / 4
    desc = mid + amp * math.cos(2 * (phi - math.pi / 4))
    asc = mid + amp * math.cos(2 * (phi - 3 * math.pi / 4))
    left, right = {1: (l_max, desc), 3: (desc, l_min), 5: (l_min, asc), 7: (asc, l_max)}[boundary]
    assert abs(left - right) < 1e-9
    spec = ScheduleSpec("stair_cosine", 16384, 8192, 640)
    assert abs(raw_cap(spec, boundary * 80) - left) < 1e-9


kinds = st.sampled_from(["stair", "cosine", "stair_cosine"])


@st.composite
def specs(draw):
    l_min = draw(st.integers(1, 5000))
    l_max = draw(st.integers(l_min, 20000))
    return ScheduleSpec(draw(kinds), l_max, l_min, draw(st.integers(2, 700)))


@settings(max_examples=300, deadline=None)
@given(specs(), st.integers(0, 10_000))
def test_bounds_periodicity_and_oracle(spec, t):
    c = cap_at(spec, t)
    assert spec.l_min <= c <= spec.l_max
    assert c == cap_at(spec, t + spec.cycle_len)
    assert c == oracle_cap(spec.kind.value, spec.l_max, spec.l_min, spec.cycle_len, t)


@settings(max_examples=100, deadline=None)
@given(specs(), st.integers(0, 10_000))
def test_cosine_symmetry(spec, t):
    spec = ScheduleSpec("cosine", spec.l_max, spec.l_min, spec.cycle_len)
    r = t % spec.cycle_len
    assert abs(raw_cap(spec, t) - raw_cap(spec, (spec.cycle_len - r) % spec.cycle_len)) < 1e-6


@pytest.mark.parametrize("kind", ["cosine", "stair_cosine", "stair"])
def test_monotone_halves(kind):
    spec = ScheduleSpec(kind, 16384, 8192, 640)
    caps = np.array([raw_cap(spec, t) for t in range(641)])
    assert np.all(np.diff(caps[:321]) <= 1e-9)
    assert np.all(np.diff(caps[320:]) >= -1e-9)


def test_curve_csv(tmp_path):
    spec = ScheduleSpec("cosine", 100, 50, 4)
    path = tmp_path / "curve.csv"
    write_curve_csv(dump_curve(spec, 5), path)
    assert path.read_text() == "step,cap\n0,100\n1,75\n2,50\n3,75\n4,100\n"
