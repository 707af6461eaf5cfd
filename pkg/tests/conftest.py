"""Shared desk-scale fixtures: small grids that exercise the full physics."""

from __future__ import annotations

import numpy as np
import pytest

from usct.model import (
    AcquisitionConfig,
    ExcitationPulse,
    Grid2D,
    SoundSpeedMap,
    TransducerArray,
)


def desk_config(
    nx: int = 60,
    dx: float = 1.0e-3,
    pad: int = 12,
    n_receivers: int = 32,
    transmitter_indices=None,
    n_steps: int = 200,
    f0: float = 3.0e5,
    t0: float = 6.0e-6,
    sigma: float = 2.0e-6,
    dt: float = 0.3e-6,
    radius: float | None = None,
) -> AcquisitionConfig:
    """Small ring inside the image region; resolves the pulse at ~5 ppw."""
    grid = Grid2D(nx=nx, dx=dx, pad=pad)
    array = TransducerArray(
        radius=0.405 * nx * dx if radius is None else radius,
        n_receivers=n_receivers,
        transmitter_indices=transmitter_indices,
    )
    pulse = ExcitationPulse(f0=f0, t0=t0, sigma=sigma)
    return AcquisitionConfig(grid=grid, array=array, pulse=pulse, dt=dt, n_steps=n_steps, c_ref=1700.0)


def smooth_bump_map(grid: Grid2D, amplitude: float = 40.0, width: float = 8.0e-3) -> SoundSpeedMap:
    x = grid.axis_coords()
    X, Y = np.meshgrid(x, x, indexing="ij")
    bump = amplitude * np.exp(-((X - 0.004) ** 2 + (Y + 0.003) ** 2) / (2 * width**2))
    return SoundSpeedMap(grid, 1500.0 + bump)


def inclusion_map(grid: Grid2D, contrast: float = 0.03, radius: float = 8.0e-3) -> SoundSpeedMap:
    x = grid.axis_coords()
    X, Y = np.meshgrid(x, x, indexing="ij")
    values = np.full((grid.nx, grid.nx), 1500.0)
    values[np.hypot(X - 0.004, Y + 0.002) <= radius] = 1500.0 * (1.0 + contrast)
    return SoundSpeedMap(grid, values)


@pytest.fixture(scope="session")
def tiny_config() -> AcquisitionConfig:
    """Very small problem for fast functional tests."""
    return desk_config(nx=40, pad=8, n_receivers=16, transmitter_indices=(0, 8), n_steps=120)


@pytest.fixture(scope="session")
def tiny_water(tiny_config) -> SoundSpeedMap:
    return SoundSpeedMap.homogeneous(tiny_config.grid, 1500.0)
