"""Core data model for the 2D ring-array ultrasound simulation toolkit.

Conventions used throughout the package:

* 2D image arrays are indexed ``[ix, iy]`` with axis 0 along +x and axis 1
  along +y; the physical center of pixel ``(qx, qy)`` is
  ``origin + (qx*dx, qy*dx)``.
* The image grid is ``nx x nx`` pixels. The computational grid adds ``pad``
  pixels on every side (absorbing layer plus room for the transducer ring);
  image pixel ``(qx, qy)`` maps to computational pixel ``(qx+pad, qy+pad)``.
* Receiver index 0 sits at angle 0 (+x axis); angles increase
  counterclockwise.
* Measurement tensors are indexed ``(source, time, receiver)``; time sample
  ``k`` corresponds to ``t = k*dt``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CFL_LIMIT",
    "WATER_SPEED",
    "UsctError",
    "InvalidMedium",
    "UnstableTimestep",
    "NumericalBlowup",
    "ShapeMismatch",
    "GeometryError",
    "Grid2D",
    "SoundSpeedMap",
    "TransducerArray",
    "ExcitationPulse",
    "AcquisitionConfig",
    "MeasurementTensor",
    "pulse_eval",
    "cfl_check",
    "transducer_positions",
    "points_per_wavelength",
    "default_config",
]

# Von Neumann stability bound of the 4th-order-space / 2nd-order-time stencil.
CFL_LIMIT = math.sqrt(3.0 / 8.0)

# Speed of sound of the coupling medium, m/s. Also fills the padded border.
WATER_SPEED = 1500.0


class UsctError(Exception):
    """Base class for all errors raised by this package."""


class InvalidMedium(UsctError):
    """Speed-of-sound map contains non-positive or non-finite values."""


class UnstableTimestep(UsctError):
    """CFL number exceeds the stability limit of the scheme."""


class NumericalBlowup(UsctError):
    """A solve produced non-finite field values."""


class ShapeMismatch(UsctError):
    """Array shapes are inconsistent with the operation's contract."""


class GeometryError(UsctError):
    """Transducer or grid geometry violates a containment invariant."""


@dataclass(frozen=True)
class Grid2D:
    """Square pixel grid for images and the padded computational domain.

    Parameters
    ----------
    nx : int
        Pixels per axis of the image grid (>= 16).
    dx : float
        Pixel pitch in meters.
    pad : int
        Absorbing-layer width in pixels added on each side of the image
        grid to form the computational grid.
    origin : tuple of float, optional
        Physical coordinate of the center of image pixel (0, 0), meters.
        Defaults to centering the field of view on (0, 0).
    """

    nx: int
    dx: float
    pad: int = 0
    origin: tuple[float, float] = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.nx < 16:
            raise ValueError(f"nx must be >= 16, got {self.nx}")
        if not (self.dx > 0 and math.isfinite(self.dx)):
            raise ValueError(f"dx must be positive and finite, got {self.dx}")
        if self.pad < 0:
            raise ValueError(f"pad must be >= 0, got {self.pad}")
        if self.origin is None:
            half = (self.nx - 1) / 2.0 * self.dx
            object.__setattr__(self, "origin", (-half, -half))
        else:
            object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def fov(self) -> float:
        """Physical field of view per axis, meters."""
        return self.nx * self.dx

    @property
    def nc(self) -> int:
        """Computational grid size per axis (image plus padding)."""
        return self.nx + 2 * self.pad

    @property
    def center(self) -> tuple[float, float]:
        """Physical coordinate of the image-grid center (= ring center)."""
        half = (self.nx - 1) / 2.0 * self.dx
        return (self.origin[0] + half, self.origin[1] + half)

    def pixel_center(self, qx: int, qy: int) -> tuple[float, float]:
        """Physical coordinate of the center of image pixel (qx, qy)."""
        return (self.origin[0] + qx * self.dx, self.origin[1] + qy * self.dx)

    def axis_coords(self) -> np.ndarray:
        """Pixel-center coordinates along one image axis (x shown; y equal)."""
        return self.origin[0] + self.dx * np.arange(self.nx)

    def comp_origin(self) -> tuple[float, float]:
        """Physical coordinate of computational pixel (0, 0)."""
        return (self.origin[0] - self.pad * self.dx, self.origin[1] - self.pad * self.dx)

    def position_to_comp_pixel(self, x: float, y: float) -> tuple[int, int]:
        """Nearest computational-grid pixel to a physical position.

        Raises
        ------
        GeometryError
            If the position falls outside the computational grid.
        """
        ox, oy = self.comp_origin()
        cx = int(round((x - ox) / self.dx))
        cy = int(round((y - oy) / self.dx))
        if not (0 <= cx < self.nc and 0 <= cy < self.nc):
            raise GeometryError(
                f"position ({x:.6g}, {y:.6g}) m maps to pixel ({cx}, {cy}) "
                f"outside the {self.nc}x{self.nc} computational grid"
            )
        return cx, cy


@dataclass(frozen=True)
class SoundSpeedMap:
    """Pixelized speed-of-sound image, m/s, on the image grid."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (self.grid.nx, self.grid.nx):
            raise ShapeMismatch(
                f"values shape {vals.shape} does not match grid ({self.grid.nx}, {self.grid.nx})"
            )
        if not np.all(np.isfinite(vals)):
            raise InvalidMedium("speed map contains non-finite values")
        if np.any(vals <= 0):
            raise InvalidMedium("speed map contains non-positive values")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        # min/max cached at construction; maps are immutable afterwards
        object.__setattr__(self, "_c_min", float(vals.min()))
        object.__setattr__(self, "_c_max", float(vals.max()))

    @property
    def c_min(self) -> float:
        return self._c_min  # type: ignore[attr-defined]

    @property
    def c_max(self) -> float:
        return self._c_max  # type: ignore[attr-defined]

    @staticmethod
    def homogeneous(grid: Grid2D, speed: float = WATER_SPEED) -> "SoundSpeedMap":
        return SoundSpeedMap(grid, np.full((grid.nx, grid.nx), float(speed)))


@dataclass(frozen=True)
class TransducerArray:
    """Circular ring of point transducers.

    All ``n_receivers`` transducers record; the subset named by
    ``transmitter_indices`` (indices into the receiver list) also emits.
    The default layout makes every fourth transducer a transmitter.
    """

    radius: float
    n_receivers: int
    transmitter_indices: tuple[int, ...] = None  # type: ignore[assignment]
    receiver_angles: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if self.n_receivers < 1:
            raise ValueError("need at least one receiver")
        if self.receiver_angles is None:
            angles = 2.0 * np.pi * np.arange(self.n_receivers) / self.n_receivers
        else:
            angles = np.asarray(self.receiver_angles, dtype=np.float64)
            if angles.shape != (self.n_receivers,):
                raise ShapeMismatch("receiver_angles length must equal n_receivers")
        angles = angles.copy()
        angles.setflags(write=False)
        object.__setattr__(self, "receiver_angles", angles)

        if self.transmitter_indices is None:
            if self.n_receivers % 4 != 0:
                raise ValueError(
                    "default every-fourth transmitter layout needs n_receivers divisible by 4"
                )
            idx = tuple(range(0, self.n_receivers, 4))
        else:
            idx = tuple(int(i) for i in self.transmitter_indices)
            if any(b <= a for a, b in zip(idx, idx[1:])):
                raise ValueError("transmitter_indices must be strictly increasing")
            if idx and (idx[0] < 0 or idx[-1] >= self.n_receivers):
                raise ValueError("transmitter_indices must lie in [0, n_receivers)")
        object.__setattr__(self, "transmitter_indices", idx)

    @property
    def n_transmitters(self) -> int:
        return len(self.transmitter_indices)


@dataclass(frozen=True)
class ExcitationPulse:
    """Gaussian-windowed sinusoid: ``A * exp(-(t-t0)^2/(2 sigma^2)) * sin(2 pi f0 t)``."""

    f0: float
    t0: float
    sigma: float
    amplitude: float = 1.0

    def __post_init__(self):
        if self.f0 <= 0:
            raise ValueError(f"f0 must be positive, got {self.f0}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.t0 < 0:
            raise ValueError(f"t0 must be >= 0, got {self.t0}")


@dataclass(frozen=True)
class AcquisitionConfig:
    """Everything that defines one acquisition: geometry, pulse, and timing."""

    grid: Grid2D
    array: TransducerArray
    pulse: ExcitationPulse
    dt: float
    n_steps: int
    c_ref: float = 1600.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.c_ref <= 0:
            raise ValueError(f"c_ref must be positive, got {self.c_ref}")
        cfl = self.c_ref * self.dt / self.grid.dx
        if cfl > CFL_LIMIT:
            raise UnstableTimestep(
                f"CFL number {cfl:.4f} (at c_ref={self.c_ref} m/s) exceeds the "
                f"limit {CFL_LIMIT:.4f}"
            )
        # every transducer must map to a computational-grid pixel
        cx, cy = self.grid.center
        for pos in transducer_positions(self.array):
            self.grid.position_to_comp_pixel(cx + pos[0], cy + pos[1])

    @property
    def acquisition_time(self) -> float:
        """Total acquisition time T = n_steps * dt, seconds."""
        return self.n_steps * self.dt

    @property
    def time_axis(self) -> np.ndarray:
        """Sample times t_k = k*dt for k = 0..n_steps-1."""
        return self.dt * np.arange(self.n_steps)


@dataclass(frozen=True)
class MeasurementTensor:
    """Waveform data cube indexed ``(source, time, receiver)``.

    ``encoded`` marks tensors whose leading axis holds encoded channels
    rather than physical sources.
    """

    values: np.ndarray
    encoded: bool = False

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.ndim != 3:
            raise ShapeMismatch(f"measurement tensor must be 3-axis, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("measurement tensor contains non-finite entries")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n_sources(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]

    @property
    def n_receivers(self) -> int:
        return self.values.shape[2]


def pulse_eval(pulse: ExcitationPulse, t):
    """Evaluate the excitation pulse at time(s) ``t`` (seconds).

    Total function: accepts scalars or arrays, returns the same shape.
    """
    t = np.asarray(t, dtype=np.float64)
    envelope = np.exp(-((t - pulse.t0) ** 2) / (2.0 * pulse.sigma**2))
    out = pulse.amplitude * envelope * np.sin(2.0 * np.pi * pulse.f0 * t)
    return float(out) if out.ndim == 0 else out


def cfl_check(speed_map: SoundSpeedMap, dt: float) -> float:
    """Return the CFL number ``c_max*dt/dx``; raise if the scheme is unstable.

    Raises
    ------
    UnstableTimestep
        If the CFL number exceeds ``CFL_LIMIT`` = sqrt(3/8).
    InvalidMedium
        If the medium contains non-positive speeds (checked at construction,
        re-checked here defensively).
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if speed_map.c_min <= 0:
        raise InvalidMedium("speed map contains non-positive values")
    cfl = speed_map.c_max * dt / speed_map.grid.dx
    if cfl > CFL_LIMIT:
        raise UnstableTimestep(
            f"CFL number {cfl:.4f} exceeds the stability limit {CFL_LIMIT:.4f}"
        )
    return cfl


def transducer_positions(array: TransducerArray) -> np.ndarray:
    """(x, y) positions of all receivers relative to the ring center, meters.

    Receiver j sits at ``(R cos(angle_j), R sin(angle_j))`` with receiver 0
    on the +x axis and angles increasing counterclockwise.
    """
    return array.radius * np.stack(
        [np.cos(array.receiver_angles), np.sin(array.receiver_angles)], axis=1
    )


def points_per_wavelength(c_min: float, f0: float, dx: float) -> float:
    """Grid points per wavelength at the pulse center frequency."""
    return c_min / (f0 * dx)


def default_config(n_steps: int = 640) -> AcquisitionConfig:
    """The default virtual imaging system.

    360x360 image grid at 0.6 mm pitch padded by 40 pixels, a 110.4 mm ring
    of 256 receivers with every fourth one transmitting, a 0.5 MHz pulse
    (t0 = 3.2 us, sigma = 2 us), and 0.2 us sampling. ``n_steps`` defaults
    to 640 (128 us of data); 400 is also in circulation and remains
    configurable.
    """
    grid = Grid2D(nx=360, dx=0.6e-3, pad=40)
    array = TransducerArray(radius=110.4e-3, n_receivers=256)
    pulse = ExcitationPulse(f0=0.5e6, t0=3.2e-6, sigma=2.0e-6)
    return AcquisitionConfig(
        grid=grid, array=array, pulse=pulse, dt=0.2e-6, n_steps=n_steps, c_ref=1590.0
    )
