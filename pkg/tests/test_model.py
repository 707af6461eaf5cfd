import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from usct.model import (
    CFL_LIMIT,
    AcquisitionConfig,
    ExcitationPulse,
    Grid2D,
    InvalidMedium,
    MeasurementTensor,
    ShapeMismatch,
    SoundSpeedMap,
    TransducerArray,
    UnstableTimestep,
    cfl_check,
    default_config,
    points_per_wavelength,
    pulse_eval,
    transducer_positions,
)
from usct.io import config_from_text, config_to_text

TABLE_PULSE = ExcitationPulse(f0=0.5e6, t0=3.2e-6, sigma=2.0e-6)


class TestPulse:
    def test_zero_at_t0_equals_zero(self):
        assert pulse_eval(TABLE_PULSE, 0.0) == 0.0

    def test_value_at_center_time(self):
        # direct closed-form evaluation: envelope is 1 at t = t0, so the
        # value is sin(2*pi*0.5e6*3.2e-6) = sin(3.2*pi) = -0.58779...
        expected = math.sin(2.0 * math.pi * 0.5e6 * 3.2e-6)
        assert expected == pytest.approx(-0.5877852522924734, abs=1e-12)
        assert pulse_eval(TABLE_PULSE, 3.2e-6) == pytest.approx(expected, rel=1e-12)

    @given(
        f0=st.floats(1e5, 5e6),
        t0=st.floats(0.0, 1e-5),
        sigma=st.floats(1e-7, 1e-5),
        amp=st.floats(0.1, 10.0),
    )
    def test_envelope_peaks_at_center_time(self, f0, t0, sigma, amp):
        pulse = ExcitationPulse(f0=f0, t0=t0, sigma=sigma, amplitude=amp)
        t = np.linspace(0.0, t0 + 5 * sigma, 1001)
        envelope = np.abs(pulse_eval(pulse, t)) / (np.abs(np.sin(2 * np.pi * f0 * t)) + 1e-300)
        # envelope ratio is the Gaussian; its max over the grid sits at the
        # sample closest to t0
        assert abs(t[np.argmax(envelope)] - t0) <= (t[1] - t[0]) * 1.5

    def test_vectorized(self):
        t = np.array([0.0, 1e-6, 2e-6])
        out = pulse_eval(TABLE_PULSE, t)
        assert out.shape == (3,)
        assert out[0] == 0.0

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            ExcitationPulse(f0=-1.0, t0=0.0, sigma=1e-6)
        with pytest.raises(ValueError):
            ExcitationPulse(f0=1e6, t0=0.0, sigma=0.0)
        with pytest.raises(ValueError):
            ExcitationPulse(f0=1e6, t0=-1e-6, sigma=1e-6)


class TestCfl:
    def test_reference_operating_point(self):
        grid = Grid2D(nx=16, dx=0.6e-3)
        speed_map = SoundSpeedMap.homogeneous(grid, 1590.0)
        assert cfl_check(speed_map, 0.2e-6) == pytest.approx(0.53, rel=1e-12)

    def test_unstable_timestep(self):
        grid = Grid2D(nx=16, dx=0.6e-3)
        speed_map = SoundSpeedMap.homogeneous(grid, 3200.0)
        with pytest.raises(UnstableTimestep):
            cfl_check(speed_map, 0.2e-6)
        # direct formula: 3200 * 0.2us / 0.6mm = 1.0667
        assert 3200.0 * 0.2e-6 / 0.6e-3 == pytest.approx(1.0667, abs=1e-4)

    def test_invalid_medium_rejected_at_construction(self):
        grid = Grid2D(nx=16, dx=0.6e-3)
        values = np.full((16, 16), 1500.0)
        values[3, 4] = 0.0
        with pytest.raises(InvalidMedium):
            SoundSpeedMap(grid, values)
        values[3, 4] = -10.0
        with pytest.raises(InvalidMedium):
            SoundSpeedMap(grid, values)
        values[3, 4] = np.nan
        with pytest.raises(InvalidMedium):
            SoundSpeedMap(grid, values)

    def test_limit_value(self):
        assert CFL_LIMIT == pytest.approx(math.sqrt(3.0 / 8.0), rel=1e-15)


class TestGrid:
    def test_basic_validation(self):
        with pytest.raises(ValueError):
            Grid2D(nx=8, dx=1e-3)
        with pytest.raises(ValueError):
            Grid2D(nx=16, dx=-1e-3)
        with pytest.raises(ValueError):
            Grid2D(nx=16, dx=1e-3, pad=-1)

    def test_fov_and_computational_size(self):
        grid = Grid2D(nx=360, dx=0.6e-3, pad=40)
        assert grid.fov == pytest.approx(0.216)
        assert grid.nc == 440

    @given(
        nx=st.integers(16, 128),
        dxum=st.integers(100, 2000),
        pad=st.integers(0, 24),
        qx=st.integers(0, 127),
        qy=st.integers(0, 127),
    )
    def test_pixel_centers_reproducible(self, nx, dxum, pad, qx, qy):
        qx, qy = qx % nx, qy % nx
        dx = dxum * 1e-6
        grid = Grid2D(nx=nx, dx=dx, pad=pad)
        x, y = grid.pixel_center(qx, qy)
        assert x == grid.origin[0] + qx * dx
        assert y == grid.origin[1] + qy * dx
        # an image pixel center snaps to its own computational pixel
        assert grid.position_to_comp_pixel(x, y) == (qx + pad, qy + pad)

    def test_centered_default_origin(self):
        grid = Grid2D(nx=20, dx=1e-3)
        cx, cy = grid.center
        assert cx == pytest.approx(0.0, abs=1e-15)
        assert cy == pytest.approx(0.0, abs=1e-15)


class TestTransducerArray:
    def test_positions_reference_points(self):
        array = TransducerArray(radius=110.4e-3, n_receivers=256)
        pos = transducer_positions(array)
        assert pos.shape == (256, 2)
        np.testing.assert_allclose(pos[0], [110.4e-3, 0.0], atol=1e-18)
        # quarter turn: 64 * (2*pi/256) = pi/2
        np.testing.assert_allclose(pos[64], [0.0, 110.4e-3], atol=1e-16)

    def test_antipodal_pairs(self):
        array = TransducerArray(radius=0.1, n_receivers=64)
        pos = transducer_positions(array)
        np.testing.assert_allclose(pos[:32], -pos[32:], atol=1e-16)

    def test_default_every_fourth_transmitter(self):
        array = TransducerArray(radius=0.1, n_receivers=256)
        assert array.n_transmitters == 64
        assert array.transmitter_indices == tuple(range(0, 256, 4))

    def test_transmitter_index_validation(self):
        with pytest.raises(ValueError):
            TransducerArray(radius=0.1, n_receivers=16, transmitter_indices=(4, 2))
        with pytest.raises(ValueError):
            TransducerArray(radius=0.1, n_receivers=16, transmitter_indices=(0, 16))


class TestDefaultConfig:
    def test_table_defaults_validate(self):
        cfg = default_config()
        assert cfg.grid.nx == 360
        assert cfg.grid.dx == pytest.approx(0.6e-3)
        assert cfg.array.n_receivers == 256
        assert cfg.array.n_transmitters == 64
        assert cfg.n_steps == 640
        assert cfg.dt == pytest.approx(0.2e-6)
        assert cfg.acquisition_time == pytest.approx(128e-6)

    def test_points_per_wavelength(self):
        assert points_per_wavelength(1500.0, 0.5e6, 0.6e-3) == pytest.approx(5.0)

    def test_alternate_step_count_supported(self):
        assert default_config(n_steps=400).n_steps == 400

    def test_every_transducer_on_the_computational_grid(self):
        cfg = default_config()
        grid = cfg.grid
        cx, cy = grid.center
        for px, py in transducer_positions(cfg.array):
            ix, iy = grid.position_to_comp_pixel(cx + px, cy + py)
            assert 0 <= ix < grid.nc and 0 <= iy < grid.nc

    def test_cfl_guard_in_constructor(self):
        grid = Grid2D(nx=16, dx=0.6e-3)
        array = TransducerArray(radius=3e-3, n_receivers=4, transmitter_indices=(0,))
        pulse = ExcitationPulse(f0=0.5e6, t0=3.2e-6, sigma=2e-6)
        with pytest.raises(UnstableTimestep):
            AcquisitionConfig(grid=grid, array=array, pulse=pulse, dt=0.5e-6, n_steps=10, c_ref=1600.0)


class TestMeasurementTensor:
    def test_axis_order(self):
        values = np.arange(24, dtype=np.float64).reshape(2, 3, 4)
        t = MeasurementTensor(values=values)
        assert (t.n_sources, t.n_steps, t.n_receivers) == (2, 3, 4)
        assert t.values[1, 2, 3] == 23.0

    def test_rejects_non_finite(self):
        values = np.zeros((1, 2, 2))
        values[0, 0, 0] = np.inf
        with pytest.raises(ValueError):
            MeasurementTensor(values=values)

    def test_rejects_wrong_rank(self):
        with pytest.raises(ShapeMismatch):
            MeasurementTensor(values=np.zeros((2, 2)))


class TestRoundTrip:
    def test_config_text_round_trip_is_exact(self):
        cfg = default_config()
        text = config_to_text(cfg)
        back = config_from_text(text)
        assert back.grid == cfg.grid
        assert back.array.radius == cfg.array.radius
        assert back.array.transmitter_indices == cfg.array.transmitter_indices
        np.testing.assert_array_equal(back.array.receiver_angles, cfg.array.receiver_angles)
        assert back.pulse == cfg.pulse
        assert (back.dt, back.n_steps, back.c_ref) == (cfg.dt, cfg.n_steps, cfg.c_ref)
        # serializing again reproduces the same bytes
        assert config_to_text(back) == text

    def test_round_trip_nondefault_transmitters(self):
        grid = Grid2D(nx=48, dx=1.1e-3, pad=10, origin=(-0.02, -0.025))
        array = TransducerArray(radius=0.019, n_receivers=12, transmitter_indices=(1, 5, 9))
        pulse = ExcitationPulse(f0=2.7e5, t0=5.5e-6, sigma=1.9e-6, amplitude=0.75)
        cfg = AcquisitionConfig(grid=grid, array=array, pulse=pulse, dt=0.25e-6, n_steps=111, c_ref=1650.0)
        back = config_from_text(config_to_text(cfg))
        assert config_to_text(back) == config_to_text(cfg)
        assert back.grid.origin == cfg.grid.origin
