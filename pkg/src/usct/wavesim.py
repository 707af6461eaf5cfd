"""Finite-difference solver for the constant-density acoustic wave equation.

The scheme is leapfrog in time (2nd order) with a 4th-order five-point
Laplacian per axis. One step of the update, with ``m = (c*dt)^2`` and a
multiplicative sponge factor ``g`` (1 in the interior, decaying into the
absorbing pad), reads::

    p[k+1] = g * (2 p[k] + m * (Lap p[k] + s[k])) - g^2 * p[k-1]

Point sources are injected at the emitter's nearest pixel center scaled by
``1/dx^2`` (2D delta discretization); receivers sample the pressure at their
nearest pixel centers. The first two time levels are exactly zero, matching
quiescent initial conditions.

The damping enters symmetrically enough that the discrete propagator is
reciprocal: swapping one emitter/receiver pair reproduces the same trace up
to floating-point roundoff. The adjoint used for gradients
(:meth:`Propagator.adjoint_gradient`) is the exact transpose of this
time-stepping, so finite-difference checks of the gradient hold at tight
tolerances.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .model import (
    AcquisitionConfig,
    CFL_LIMIT,
    MeasurementTensor,
    NumericalBlowup,
    ShapeMismatch,
    SoundSpeedMap,
    UnstableTimestep,
    WATER_SPEED,
    pulse_eval,
    transducer_positions,
)

__all__ = [
    "SPONGE_STRENGTH",
    "WaveField",
    "SamplingOperator",
    "Propagator",
    "MissingFrames",
    "SourceSolveError",
    "forward_solve",
    "sample_traces",
    "simulate_acquisition",
]


class MissingFrames(ShapeMismatch):
    """Adjoint requested without a stored forward history."""


class SourceSolveError(NumericalBlowup):
    """Wraps a solver failure with the index of the failing source."""

    def __init__(self, source_index: int, cause: Exception):
        super().__init__(f"source {source_index}: {cause}")
        self.source_index = source_index

# 4th-order Laplacian weights: per-axis (-1/12, 4/3, -5/2, 4/3, -1/12) / dx^2
_C0 = -5.0
_C1 = 4.0 / 3.0
_C2 = -1.0 / 12.0

# Sponge damping factor at normalized depth u into the pad: exp(-(a*u)^2)
SPONGE_STRENGTH = 3.0

_BLOWUP_CHECK_EVERY = 32


@dataclass(frozen=True)
class WaveField:
    """Result of one forward solve.

    ``traces`` has shape (n_steps, n_receivers) with row k sampled at time
    ``k*dt``. ``frames`` (optional, float32) holds the full pressure history
    on the padded computational grid, as needed by the adjoint gradient.
    """

    traces: np.ndarray
    frames: np.ndarray | None = None


@dataclass(frozen=True)
class SamplingOperator:
    """Nearest-pixel sampling of the computational grid at the receivers."""

    rx: np.ndarray  # computational-grid x indices, one per receiver
    ry: np.ndarray

    @staticmethod
    def from_config(config: AcquisitionConfig) -> "SamplingOperator":
        grid = config.grid
        cx, cy = grid.center
        rel = transducer_positions(config.array)
        rx = np.empty(len(rel), dtype=np.intp)
        ry = np.empty(len(rel), dtype=np.intp)
        for j, (px, py) in enumerate(rel):
            rx[j], ry[j] = grid.position_to_comp_pixel(cx + px, cy + py)
        rx.setflags(write=False)
        ry.setflags(write=False)
        return SamplingOperator(rx=rx, ry=ry)

    def __len__(self) -> int:
        return len(self.rx)


def sample_traces(frames: np.ndarray, op: SamplingOperator) -> np.ndarray:
    """Extract receiver traces from a stored pressure history.

    ``frames`` is (n_steps, nc, nc); returns (n_steps, n_receivers).
    """
    nc = frames.shape[1]
    if np.any(op.rx >= nc) or np.any(op.ry >= nc):
        raise ShapeMismatch("sampling indices fall outside the stored frames")
    return np.ascontiguousarray(frames[:, op.rx, op.ry], dtype=np.float64)


def _sponge_profile(nx: int, pad: int) -> np.ndarray:
    """Per-pixel damping factor on the computational grid.

    Depth is the Chebyshev distance (pixels) from the image region; factor
    exp(-(SPONGE_STRENGTH * depth/pad)^2) reaches ~1.2e-4 at the outer edge.
    """
    nc = nx + 2 * pad
    g = np.ones((nc, nc), dtype=np.float64)
    if pad == 0:
        return g
    idx = np.arange(nc)
    depth_1d = np.maximum(pad - idx, idx - (pad + nx - 1)).clip(min=0)
    depth = np.maximum(depth_1d[:, None], depth_1d[None, :])
    g[:] = np.exp(-((SPONGE_STRENGTH * depth / pad) ** 2))
    return g


def _laplacian(u: np.ndarray, out: np.ndarray, inv_dx2: float) -> np.ndarray:
    """4th-order Laplacian of the haloed field ``u`` into ``out`` (interior)."""
    np.multiply(u[2:-2, 2:-2], _C0, out=out)
    out += _C1 * (u[1:-3, 2:-2] + u[3:-1, 2:-2] + u[2:-2, 1:-3] + u[2:-2, 3:-1])
    out += _C2 * (u[0:-4, 2:-2] + u[4:, 2:-2] + u[2:-2, 0:-4] + u[2:-2, 4:])
    out *= inv_dx2
    return out


class Propagator:
    """Forward/adjoint wave propagation for one medium and acquisition.

    Precomputes the padded medium, sponge profile, source pixels, and
    receiver sampling; instances are read-only after construction and safe
    to share across threads.
    """

    def __init__(self, speed_map: SoundSpeedMap, config: AcquisitionConfig):
        grid = config.grid
        if speed_map.grid != grid:
            raise ShapeMismatch("speed map grid differs from the acquisition grid")
        self.config = config
        self.grid = grid
        nc, pad, nx = grid.nc, grid.pad, grid.nx

        c = np.full((nc, nc), WATER_SPEED, dtype=np.float64)
        c[pad : pad + nx, pad : pad + nx] = speed_map.values
        cfl = c.max() * config.dt / grid.dx
        if cfl > CFL_LIMIT:
            raise UnstableTimestep(
                f"CFL number {cfl:.4f} of the padded medium exceeds {CFL_LIMIT:.4f}"
            )
        self.c = c
        self.m = (c * config.dt) ** 2
        self.g = _sponge_profile(nx, pad)
        self.g2 = self.g**2
        self.sampling = SamplingOperator.from_config(config)

        cx, cy = grid.center
        rel = transducer_positions(config.array)
        tx_pix = [
            grid.position_to_comp_pixel(cx + rel[t, 0], cy + rel[t, 1])
            for t in config.array.transmitter_indices
        ]
        self.src_x = np.array([p[0] for p in tx_pix], dtype=np.intp)
        self.src_y = np.array([p[1] for p in tx_pix], dtype=np.intp)
        # source term g*m*s with s = w * pulse(t) / dx^2 at the emitter pixel
        self._src_gain = (
            self.g[self.src_x, self.src_y] * self.m[self.src_x, self.src_y] / grid.dx**2
        )
        self.pulse_series = pulse_eval(config.pulse, config.time_axis)

    @property
    def n_transmitters(self) -> int:
        return len(self.src_x)

    def _source_weights(self, source) -> np.ndarray:
        if np.isscalar(source):
            i = int(source)
            if not 0 <= i < self.n_transmitters:
                raise ShapeMismatch(
                    f"source index {i} out of range for {self.n_transmitters} transmitters"
                )
            w = np.zeros(self.n_transmitters)
            w[i] = 1.0
            return w
        w = np.asarray(source, dtype=np.float64)
        if w.shape != (self.n_transmitters,):
            raise ShapeMismatch(
                f"source weights must have length {self.n_transmitters}, got shape {w.shape}"
            )
        return w

    def forward(self, source, store_frames: bool = False) -> WaveField:
        """Propagate one (possibly encoded) source.

        ``source`` is a transmitter index or a weight vector over all
        transmitters; weights are superposed in a single solve.
        """
        w = self._source_weights(source)
        cfg = self.config
        nc, K = self.grid.nc, cfg.n_steps
        J = len(self.sampling)
        src_amp = self._src_gain * w

        shape = (nc + 4, nc + 4)
        p_prev = np.zeros(shape)
        p_cur = np.zeros(shape)
        p_new = np.zeros(shape)
        lap = np.empty((nc, nc))
        tmp = np.empty((nc, nc))
        traces = np.empty((K, J))
        frames = np.empty((K, nc, nc), dtype=np.float32) if store_frames else None

        interior = (slice(2, -2), slice(2, -2))
        for k in range(K):
            cur = p_cur[interior]
            traces[k] = cur[self.sampling.rx, self.sampling.ry]
            if frames is not None:
                frames[k] = cur
            if k == K - 1:
                break
            _laplacian(p_cur, lap, 1.0 / self.grid.dx**2)
            np.multiply(self.m, lap, out=tmp)
            tmp += 2.0 * cur
            tmp *= self.g
            sk = self.pulse_series[k]
            if sk != 0.0:
                np.add.at(tmp, (self.src_x, self.src_y), src_amp * sk)
            tmp -= self.g2 * p_prev[interior]
            p_new[interior] = tmp
            p_prev, p_cur, p_new = p_cur, p_new, p_prev
            if (k + 1) % _BLOWUP_CHECK_EVERY == 0 and not np.isfinite(
                p_cur[interior]
            ).all():
                raise NumericalBlowup(f"non-finite pressure field at step {k + 1}")

        if not np.isfinite(traces).all():
            raise NumericalBlowup("non-finite receiver trace")
        return WaveField(traces=traces, frames=frames)

    def adjoint_gradient(self, residual: np.ndarray, frames: np.ndarray) -> np.ndarray:
        """Gradient of (1/2)||traces - data||^2 with respect to the image c.

        ``residual`` is (n_steps, n_receivers) of predicted-minus-observed
        trace values; ``frames`` is the matching forward pressure history.
        Returns the ascent direction of the misfit, image region only.
        This is the exact transpose of :meth:`forward` (discretize, then
        differentiate), time-stepped in reverse and driven by the residual
        injected at the receiver pixels.
        """
        cfg = self.config
        nc, K, pad, nx = self.grid.nc, cfg.n_steps, self.grid.pad, self.grid.nx
        if residual.shape != (K, len(self.sampling)):
            raise ShapeMismatch(
                f"residual shape {residual.shape} != {(K, len(self.sampling))}"
            )
        if frames is None:
            raise MissingFrames("adjoint gradient requires stored forward frames")
        if frames.shape != (K, nc, nc):
            raise ShapeMismatch(f"frames shape {frames.shape} != {(K, nc, nc)}")

        # the sponge lives entirely in the pad, so g == 1 on the image region
        # and drops out of the accumulation below
        img = (slice(pad, pad + nx), slice(pad, pad + nx))

        shape = (nc + 4, nc + 4)
        lam_next2 = np.zeros(shape)  # lambda[j+2]
        lam_next = np.zeros(shape)  # lambda[j+1]
        lam_cur = np.zeros(shape)
        buf = np.zeros(shape)
        lap = np.empty((nc, nc))
        accum = np.zeros((nx, nx))
        interior = (slice(2, -2), slice(2, -2))

        fimg = frames[:, img[0], img[1]]
        for j in range(K - 1, 0, -1):
            # lambda[j] = 2 g lam[j+1] + Lap(m g lam[j+1]) - g^2 lam[j+2] - R^T r[j]
            np.multiply(self.m * self.g, lam_next[interior], out=buf[interior])
            _laplacian(buf, lap, 1.0 / self.grid.dx**2)
            cur = lam_cur[interior]
            np.multiply(2.0 * self.g, lam_next[interior], out=cur)
            cur += lap
            cur -= self.g2 * lam_next2[interior]
            np.subtract.at(cur, (self.sampling.rx, self.sampling.ry), residual[j])

            # d2p = p[j] - 2 p[j-1] + p[j-2] on the image region (p[-1] = 0)
            d2p = fimg[j].astype(np.float64) - 2.0 * fimg[j - 1]
            if j >= 2:
                d2p += fimg[j - 2]
            accum += cur[img] * d2p

            lam_next2, lam_next, lam_cur = lam_next, lam_cur, lam_next2
            if j % _BLOWUP_CHECK_EVERY == 0 and not np.isfinite(
                lam_next[interior]
            ).all():
                raise NumericalBlowup(f"non-finite adjoint field at step {j}")

        grad = accum * (-2.0 / self.c[img])
        if not np.isfinite(grad).all():
            raise NumericalBlowup("non-finite gradient")
        return grad


def forward_solve(
    speed_map: SoundSpeedMap,
    config: AcquisitionConfig,
    source,
    store_frames: bool = False,
) -> WaveField:
    """Solve one shot: ``source`` is a transmitter index or a weight vector."""
    return Propagator(speed_map, config).forward(source, store_frames=store_frames)


def simulate_acquisition(
    speed_map: SoundSpeedMap, config: AcquisitionConfig, n_workers: int = 1
) -> MeasurementTensor:
    """Fire every transmitter in sequence and collect the full data tensor.

    Per-source solves are independent; ``n_workers`` > 1 runs them in a
    thread pool. The result is deterministic either way.
    """
    prop = Propagator(speed_map, config)
    I = prop.n_transmitters
    out = np.empty((I, config.n_steps, len(prop.sampling)))

    def run(i: int) -> None:
        try:
            out[i] = prop.forward(i).traces
        except Exception as exc:
            raise SourceSolveError(i, exc) from exc

    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            list(pool.map(run, range(I)))
    else:
        for i in range(I):
            run(i)
    return MeasurementTensor(values=out, encoded=False)
