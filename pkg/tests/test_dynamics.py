"""
Pytest tests for the cosphere flow, limit cycles and cross-sections.
"""

import numpy as np
import pytest

from src.zeroscatter.core.errors import InvalidArgumentError, UnsupportedFamilyError
from src.zeroscatter.dynamics import (
    SINK,
    SOURCE,
    CosphereFlow,
    CospherePoint,
    build_section,
    find_cycles,
    integrate,
    rescaled_field,
    scattering_relation,
    transport_phase,
    wrap_angle,
)
from src.zeroscatter.symbols import SymbolDescriptor


def internal_waves():
    return SymbolDescriptor.from_config({"family": "internal-wave-homogeneous", "beta": 2.0})


def glued(lam, cone):
    return SymbolDescriptor.from_config(
        {"family": "normal-form", "lambda": lam, "cone": cone, "glued": True}
    )


def on_surface(x1):
    """Point of {sin theta = 2 cos x1} above x1."""
    return np.array([x1, 0.0, np.arcsin(2 * np.cos(x1))])


def test_wrap_angle_range():
    """Test reduction to (-pi, pi]."""
    assert wrap_angle(np.pi) == pytest.approx(np.pi)
    assert wrap_angle(-np.pi) == pytest.approx(np.pi)
    assert wrap_angle(3 * np.pi / 2) == pytest.approx(-np.pi / 2)


def test_cosphere_point_is_wrapped():
    """Test that stored coordinates are reduced."""
    point = CospherePoint(7.0, -4.0, 2 * np.pi)

    assert point.x1 == pytest.approx(7.0 - 2 * np.pi)
    assert point.x2 == pytest.approx(2 * np.pi - 4.0)
    assert point.theta == pytest.approx(0.0)


def test_flow_needs_a_homogeneous_symbol():
    """Test that inhomogeneous families are refused."""
    spec = SymbolDescriptor.from_config({"family": "internal-wave", "beta": 2.0})

    with pytest.raises(UnsupportedFamilyError):
        rescaled_field(spec, (0.0, 0.0, 0.0))
    with pytest.raises(UnsupportedFamilyError):
        CosphereFlow(spec)


def test_flow_is_tangent_to_the_energy_surface():
    """Test that dp along the field vanishes."""
    flow = CosphereFlow(internal_waves())
    y = on_surface(1.3)

    assert flow.gradient(y) @ flow.field(0.0, y) == pytest.approx(0.0, abs=1e-12)


def test_energy_drift_stays_small():
    """Test the drift over a long trajectory."""
    trajectory = integrate(internal_waves(), 0.0, on_surface(1.3), (0.0, 100.0))

    assert trajectory.drift <= 1e-6
    assert trajectory.t[-1] == pytest.approx(100.0)
    end = trajectory.final
    assert np.sin(end.theta) == pytest.approx(2 * np.cos(end.x1), abs=1e-6)


def test_integrate_rejects_points_off_the_surface():
    """Test the start point check."""
    with pytest.raises(InvalidArgumentError):
        integrate(internal_waves(), 0.0, (1.3, 0.0, 0.0), (0.0, 1.0))


def test_internal_wave_cycles():
    """Test that beta = 2 has two sinks and two sources at x1 = +-pi/2."""
    cycles = find_cycles(internal_waves(), 0.0)
    sinks = [c for c in cycles if c.kind == SINK]
    sources = [c for c in cycles if c.kind == SOURCE]

    assert len(sinks) == 2
    assert len(sources) == 2
    for cycle in cycles:
        assert abs(abs(cycle.anchor.x1) - np.pi / 2) < 1e-6
        assert min(abs(cycle.anchor.theta), abs(abs(cycle.anchor.theta) - np.pi)) < 1e-6
        assert cycle.lam > 0
        assert cycle.lyapunov.variational == pytest.approx(cycle.lam, rel=1e-4)
    assert [c.id for c in sinks] == ["sink-0", "sink-1"]


@pytest.mark.parametrize("lam, cone", [(0.3, 0.5), (0.7, 0.9), (1.0, 0.9), (1.3, 0.9)])
def test_normal_form_lyapunov_recovery(lam, cone):
    """Test that the glued normal form reports its own lambda."""
    cycles = find_cycles(glued(lam, cone), 0.0)

    assert len(cycles) == 4
    for cycle in cycles:
        assert cycle.lam == pytest.approx(lam, abs=1e-6)
        assert cycle.period == pytest.approx(2 * np.pi, abs=1e-8)


def test_return_map_closes_on_a_cycle():
    """Test that a refined cycle is a fixed point of its return map."""
    spec = glued(0.7, 0.9)
    sink = next(c for c in find_cycles(spec, 0.0) if c.kind == SINK)
    flow = CosphereFlow(spec, 0.0)

    ret = flow.return_map(sink.anchor.state(), 1)

    assert wrap_angle(ret.state[0] - sink.anchor.x1) == pytest.approx(0.0, abs=1e-8)
    assert ret.time == pytest.approx(sink.period, rel=1e-8)


@pytest.mark.parametrize("lam, side", [(0.7, 1), (0.7, -1), (1.3, 1)])
def test_section_density_is_inverse_lambda(lam, side):
    """Test the invariant density of a normal-form section."""
    spec = glued(lam, 0.9)
    sink = next(c for c in find_cycles(spec, 0.0) if c.kind == SINK)

    section = build_section(spec, 0.0, sink, offset=0.3, side=side, m=16)

    assert np.allclose(section.density, 1.0 / lam, rtol=1e-5)
    assert section.defect <= 1e-6
    assert np.sign(sink.local_offset(section.x1)) == side
    assert section.angle >= 10.0
    assert len(section.points) == 16
    assert section.phase[0] == pytest.approx(np.log(abs(sink.local_offset(section.x1))) / lam)


def test_section_rejects_bad_side():
    """Test the side argument."""
    spec = glued(0.7, 0.9)
    sink = next(c for c in find_cycles(spec, 0.0) if c.kind == SINK)

    with pytest.raises(InvalidArgumentError):
        build_section(spec, 0.0, sink, side=0)


def test_relation_table_branches_are_circle_maps():
    """Test the relation table of the glued normal form."""
    spec = glued(0.7, 0.9)
    cycles = find_cycles(spec, 0.0)
    sources = [c for c in cycles if c.kind == SOURCE]
    sinks = [c for c in cycles if c.kind == SINK]

    table = scattering_relation(spec, 0.0, sources, sinks, m=16)
    frame = table.to_frame()

    assert len(table.rows) == 2 * len(sources)
    for row in table.rows:
        assert abs(row.winding) == 1
        assert np.allclose(row.dydz, 1.0)
        assert row.sink in {c.id for c in sinks}
    assert list(frame.columns) == ["j", "sigma", "z", "j_prime", "sigma_prime", "y", "dydz"]
    assert len(frame) == 16 * len(table.rows)


def test_transport_phase_of_constant_potential():
    """Test that a constant potential integrates to V t."""
    phase = transport_phase(internal_waves(), 0.0, on_surface(1.3), 2.0, lambda x1, x2, theta: 1.5)

    assert phase == pytest.approx(3.0)


def test_section_density_needs_two_levels():
    """Test that a single offset level cannot be extrapolated."""
    spec = glued(0.7, 0.9)
    sink = next(c for c in find_cycles(spec, 0.0) if c.kind == SINK)

    with pytest.raises(InvalidArgumentError):
        build_section(spec, 0.0, sink, levels=1)


def test_relation_reverse_table_inverts_the_forward_one():
    """Test that following sinks backward undoes the forward branches."""
    spec = glued(0.7, 0.9)
    cycles = find_cycles(spec, 0.0)
    sources = [c for c in cycles if c.kind == SOURCE]
    sinks = [c for c in cycles if c.kind == SINK]

    forward = scattering_relation(spec, 0.0, sources, sinks, m=16)
    backward = scattering_relation(spec, 0.0, sources, sinks, m=16, reverse=True)

    assert backward.reverse
    assert len(backward.rows) == 2 * len(sinks)
    for row in forward.rows:
        back = backward.lookup(row.sink, row.sink_side)
        assert back.sink == row.source
        assert back.sink_side == row.side
        gap = wrap_angle(back.image(row.y) - row.z)
        assert np.max(np.abs(gap)) < 1e-4


def test_relation_landings_sit_on_the_sink_section():
    """Test that sampled landings share the sink-side phase offset."""
    spec = glued(0.7, 0.9)
    cycles = find_cycles(spec, 0.0)
    sources = [c for c in cycles if c.kind == SOURCE]
    sinks = [c for c in cycles if c.kind == SINK]

    table = scattering_relation(spec, 0.0, sources, sinks, offset=0.2, m=8)

    for row in table.rows:
        shift = wrap_angle(row.y - row.z)
        assert np.ptp(np.unwrap(shift)) < 1e-6
        assert np.allclose(row.dydz, 1.0, atol=1e-6)
