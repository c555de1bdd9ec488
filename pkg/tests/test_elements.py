import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oam_bench.exceptions import DomainError, RoutingError
from oam_bench.models.devices import PBS1_ROUTING, PBS2_ROUTING, CoatingSide, PbsRouting
from oam_bench.models.mode_space import FieldState, Polarization, apply, compose, port_intensity
from oam_bench.schemas.imperfections import ImperfectionParams
from oam_bench.services.elements import (
    crosstalk_matrix,
    hwp_jones,
    make_cubic_pbs,
    make_hwp,
    make_mirror,
    make_modified_pbs,
    make_oam_shifter,
    make_port_loss,
    make_port_swap,
    parse_element,
    prepare_linear_state,
)

H, V = Polarization.H, Polarization.V

angles = st.floats(min_value=-360, max_value=360, allow_nan=False, allow_infinity=False)


def _is_unitary(matrix: np.ndarray) -> bool:
    return np.allclose(matrix.conj().T @ matrix, np.eye(matrix.shape[0]), atol=1e-12)


class TestHalfWavePlate:
    def test_jones_at_zero(self):
        np.testing.assert_allclose(hwp_jones(0.0), [[1, 0], [0, -1]], atol=1e-15)

    def test_jones_at_45_swaps_h_and_v(self):
        np.testing.assert_allclose(hwp_jones(45.0), [[0, 1], [1, 0]], atol=1e-15)

    def test_diagonal_output(self, space):
        out = apply(make_hwp(22.5, [1], space=space), FieldState.basis_state(space, 1, H, 2))
        assert out.amplitude(1, H, 2) == pytest.approx(math.sqrt(0.5))
        assert out.amplitude(1, V, 2) == pytest.approx(math.sqrt(0.5))

    def test_other_ports_untouched(self, space):
        s = FieldState.basis_state(space, 5, H, 0)
        out = apply(make_hwp(45.0, [3, 4], space=space), s)
        np.testing.assert_array_equal(out.amplitudes, s.amplitudes)

    @given(angles)
    @settings(max_examples=50, deadline=None)
    def test_plate_is_an_involution(self, theta):
        hwp = hwp_jones(theta)
        np.testing.assert_allclose(hwp @ hwp, np.eye(2), atol=1e-12)

    @given(angles, st.floats(min_value=-1, max_value=1))
    @settings(max_examples=50, deadline=None)
    def test_plate_with_retardance_error_is_unitary(self, theta, delta):
        assert _is_unitary(hwp_jones(theta, delta))

    def test_missing_port(self, small_space):
        with pytest.raises(RoutingError):
            make_hwp(10.0, [3], space=small_space)


class TestModifiedPbs:
    def test_ideal_routing(self, space):
        pbs = make_modified_pbs(CoatingSide.RIGHT, PBS1_ROUTING, space=space)
        h = apply(pbs, FieldState.basis_state(space, 1, H, 3))
        v = apply(pbs, FieldState.basis_state(space, 1, V, 3))
        assert h.amplitude(4, H, 3) == pytest.approx(1.0)
        assert v.amplitude(3, V, 3) == pytest.approx(1.0)
        assert port_intensity(h, 3) == 0.0
        assert port_intensity(v, 4) == 0.0

    def test_coating_phase_on_the_coated_input(self, space):
        # left-coated: V entering the first input picks up the coating phase
        pbs = make_modified_pbs(CoatingSide.LEFT, PBS2_ROUTING, space=space)
        out = apply(pbs, FieldState.basis_state(space, 3, V, 0))
        assert out.amplitude(5, V, 0) == pytest.approx(-1.0)
        out = apply(pbs, FieldState.basis_state(space, 4, V, 0))
        assert out.amplitude(6, V, 0) == pytest.approx(1.0)

    def test_oam_is_preserved(self, space):
        pbs = make_modified_pbs(CoatingSide.RIGHT, PBS1_ROUTING, ImperfectionParams(pbs_extinction_db=20), space)
        assert pbs.oam_leakage() == 0.0

    def test_finite_extinction_leak(self, space):
        pbs = make_modified_pbs(CoatingSide.RIGHT, PBS1_ROUTING, ImperfectionParams(pbs_extinction_db=30), space)
        out = apply(pbs, FieldState.basis_state(space, 1, H, 0))
        main, leak = out.amplitude(4, H, 0), out.amplitude(3, H, 0)
        assert abs(leak) ** 2 / abs(main) ** 2 == pytest.approx(1e-3, rel=1e-12)
        # leaked field is a quarter period ahead of the main path
        assert (leak / main).real == pytest.approx(0.0, abs=1e-15)
        assert (leak / main).imag > 0
        assert out.total_intensity == pytest.approx(1.0, rel=1e-12)

    @given(st.floats(min_value=0, max_value=60), st.floats(min_value=-math.pi, max_value=math.pi))
    @settings(max_examples=30, deadline=None)
    def test_passive_for_any_extinction(self, extinction_db, coating_phase):
        imp = ImperfectionParams(pbs_extinction_db=extinction_db, coating_phase_rad=coating_phase)
        pbs = make_modified_pbs(CoatingSide.LEFT, PBS2_ROUTING, imp)
        assert pbs.is_passive()
        assert pbs.is_isometry(tol=1e-10)

    def test_columns_outside_inputs_are_zero(self, space):
        pbs = make_modified_pbs(CoatingSide.RIGHT, PBS1_ROUTING, space=space)
        for port in (3, 4, 5, 6):
            assert not np.any(pbs.matrix[:, space.port_slices[port]])

    @pytest.mark.parametrize("inputs, outputs", [((1,), (3, 4)), ((1, 1), (3, 4)), ((1, 2), (2, 3))])
    def test_bad_routing(self, inputs, outputs):
        with pytest.raises(RoutingError):
            PbsRouting(inputs=inputs, outputs=outputs)


class TestCubicPbs:
    def test_reflection_flips_charge(self, space):
        cube = make_cubic_pbs(PBS1_ROUTING, space=space)
        v = apply(cube, FieldState.basis_state(space, 1, V, 2))
        h = apply(cube, FieldState.basis_state(space, 1, H, 2))
        assert abs(v.amplitude(3, V, -2)) == pytest.approx(1.0)
        assert abs(h.amplitude(4, H, 2)) == pytest.approx(1.0)
        assert cube.oam_leakage() == pytest.approx(1.0)


class TestMirror:
    def test_charge_flip(self, space):
        out = apply(make_mirror(5, space=space), FieldState.basis_state(space, 5, H, 2))
        assert out.amplitude(5, H, -2) == pytest.approx(1.0)

    def test_anti_diagonal_in_charge(self, space):
        mirror = make_mirror(5, 0.3, space=space)
        block = mirror.block(5, 5)
        charges = np.tile(np.arange(-4, 5), 2)
        nonzero_rows, nonzero_cols = np.nonzero(block)
        assert np.all(charges[nonzero_rows] == -charges[nonzero_cols])

    def test_two_reflections_restore_the_charge(self, space):
        phase = 0.4
        mirror = make_mirror(6, phase, space=space)
        twice = compose(mirror, mirror)
        np.testing.assert_allclose(twice.block(6, 6), np.exp(2j * phase) * np.eye(18), atol=1e-15)

    def test_polarization_phase(self, space):
        mirror = make_mirror(5, 0.0, ImperfectionParams(mirror_pol_phase_rad=0.5), space)
        out = apply(mirror, FieldState.basis_state(space, 5, V, 1))
        assert out.amplitude(5, V, -1) == pytest.approx(np.exp(0.5j))


class TestOamShifter:
    def test_zero_shift_is_identity(self, space):
        shifter = make_oam_shifter(0, space=space)
        np.testing.assert_array_equal(shifter.matrix, np.eye(space.dimension))
        assert shifter.unitary

    def test_demodulation_to_fundamental(self, space):
        out = apply(make_oam_shifter(-3, acting_port=1, space=space), FieldState.basis_state(space, 1, H, 3))
        assert out.amplitude(1, H, 0) == pytest.approx(1.0)

    def test_shift_past_truncation_drops_amplitude(self, space):
        out = apply(make_oam_shifter(2, acting_port=1, space=space), FieldState.basis_state(space, 1, H, 3))
        assert out.total_intensity == 0.0

    def test_neighbor_crosstalk(self, space):
        out = apply(make_oam_shifter(0, 25.0, 1, space), FieldState.basis_state(space, 1, H, 0))
        neighbor = 10 ** (-2.5)
        assert abs(out.amplitude(1, H, 1)) ** 2 == pytest.approx(neighbor, rel=0.01)
        assert abs(out.amplitude(1, H, -1)) ** 2 == pytest.approx(neighbor, rel=0.01)
        assert out.total_intensity == pytest.approx(1.0, rel=1e-12)

    @pytest.mark.parametrize("reach", [1, 2, 4])
    def test_crosstalk_matrix_is_unitary(self, reach):
        assert _is_unitary(crosstalk_matrix(9, 20.0, reach))

    def test_shift_too_large(self, space):
        with pytest.raises(DomainError):
            make_oam_shifter(9, space=space)

    def test_negative_crosstalk(self, space):
        with pytest.raises(DomainError):
            make_oam_shifter(1, -1.0, space=space)


class TestLossAndSwap:
    def test_port_loss(self, space):
        imp = ImperfectionParams(port_loss={(6, H): 0.98})
        loss = make_port_loss(imp, [5, 6], space)
        out = apply(loss, FieldState.from_jones(space, 6, (1.0, 1.0)))
        assert out.amplitude(6, H) == pytest.approx(math.sqrt(0.98))
        assert out.amplitude(6, V) == pytest.approx(1.0)
        assert not loss.unitary

    def test_lossless_is_unitary(self, space):
        assert make_port_loss(ImperfectionParams(), space=space).unitary

    def test_swap(self, space):
        swap = make_port_swap(5, 6, math.pi / 2, space)
        out = apply(swap, FieldState.basis_state(space, 5, V, -1))
        assert out.amplitude(6, V, -1) == pytest.approx(1j)
        assert _is_unitary(swap.matrix)

    def test_swap_same_port(self, space):
        with pytest.raises(RoutingError):
            make_port_swap(5, 5, space=space)


class TestPreparedStates:
    @pytest.mark.parametrize("theta, jones", [
        (0.0, (1.0, 0.0)),
        (45.0, (0.0, 1.0)),
        (22.5, (math.sqrt(0.5), math.sqrt(0.5))),
    ])
    def test_linear_states(self, space, theta, jones):
        s = prepare_linear_state(theta, 2, 1, space)
        assert s.amplitude(2, H, 1) == pytest.approx(jones[0], abs=1e-15)
        assert s.amplitude(2, V, 1) == pytest.approx(jones[1], abs=1e-15)


class TestParseElement:
    def test_hwp_line(self, space):
        op = parse_element("hwp theta=22.5 ports=[3, 4]", space)
        np.testing.assert_array_equal(op.matrix, make_hwp(22.5, [3, 4], space=space).matrix)

    def test_pbs_line(self, space):
        op = parse_element("pbs coating=left in=[3,4] out=[5,6] ext_db=25", space)
        expected = make_modified_pbs(CoatingSide.LEFT, PBS2_ROUTING, ImperfectionParams(pbs_extinction_db=25), space)
        np.testing.assert_array_equal(op.matrix, expected.matrix)

    def test_other_kinds(self, space):
        assert parse_element("mirror port=5 phase=0.1", space).input_ports == {5}
        assert parse_element("shifter delta=-1 port=2 xt_db=25", space).input_ports == {2}
        assert parse_element("swap a=5 b=6", space).output_ports == {5, 6}
        assert parse_element("cubic_pbs in=[1,2] out=[3,4] ext_db=inf", space).output_ports == {3, 4}
        assert not parse_element("loss port=6 t=0.9 pol=h", space).unitary

    @pytest.mark.parametrize("line", [
        "laser power=1",
        "hwp theta=10",
        "hwp theta=10 ports=[1] colour=red",
        "pbs in=1 out=[3,4]",
        "pbs in=[1,2] out=[3,4] ext_db=-3",
        "",
    ])
    def test_malformed_lines(self, space, line):
        with pytest.raises(ValueError):
            parse_element(line, space)

    def test_impossible_routing(self, space):
        with pytest.raises(RoutingError):
            parse_element("pbs in=[1,2] out=[2,3]", space)
