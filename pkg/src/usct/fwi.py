"""Iterative speed-of-sound reconstruction from waveform data.

The misfit is the half sum of squared trace residuals over all data
channels. Its gradient comes from the discrete adjoint of the forward
scheme (one backward solve per channel, driven by the residual injected at
the receiver pixels), so finite-difference checks agree to tight
tolerances.

Source encoding turns the per-channel sum into an expectation over random
weight vectors with identity covariance: each iteration then costs one
forward and one backward solve regardless of the number of sources. No
regularization is applied; box constraints on the speed values are the
only prior.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .encoding import draw_encoding_vector
from .model import (
    AcquisitionConfig,
    MeasurementTensor,
    ShapeMismatch,
    SoundSpeedMap,
    UsctError,
)
from .wavesim import Propagator

__all__ = [
    "OPTIMIZER_KINDS",
    "FwiError",
    "FwiProblem",
    "OptimizerState",
    "make_optimizer",
    "objective",
    "gradient",
    "reconstruct",
    "FwiResult",
    "IterationRecord",
    "format_log",
]

OPTIMIZER_KINDS = ("sgd", "momentum", "nesterov", "adam")


class FwiError(UsctError):
    """Reconstruction failure; carries partial results when available."""

    def __init__(self, message: str, partial: "FwiResult | None" = None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class FwiProblem:
    """Data, acquisition model, starting point, and box constraints.

    ``channel_weights`` maps data channels to physical sources (an L x I
    matrix, typically an encoder's weights). When omitted the data channels
    are the physical sources themselves.
    """

    data: MeasurementTensor
    config: AcquisitionConfig
    initial_guess: SoundSpeedMap
    bounds: tuple[float, float] = (1300.0, 1700.0)
    channel_weights: np.ndarray | None = None

    def __post_init__(self):
        cfg = self.config
        I = cfg.array.n_transmitters
        if self.data.n_steps != cfg.n_steps or self.data.n_receivers != cfg.array.n_receivers:
            raise ShapeMismatch(
                f"data shape {self.data.values.shape} does not match config "
                f"(n_steps={cfg.n_steps}, n_receivers={cfg.array.n_receivers})"
            )
        if self.channel_weights is not None:
            w = np.asarray(self.channel_weights, dtype=np.float64)
            if w.shape != (self.data.n_sources, I):
                raise ShapeMismatch(
                    f"channel_weights shape {w.shape} != {(self.data.n_sources, I)}"
                )
            w = w.copy()
            w.setflags(write=False)
            object.__setattr__(self, "channel_weights", w)
        else:
            if self.data.encoded:
                raise ShapeMismatch(
                    "encoded data requires channel_weights describing the encoding"
                )
            if self.data.n_sources != I:
                raise ShapeMismatch(
                    f"unencoded data must have {I} channels, got {self.data.n_sources}"
                )
        lo, hi = self.bounds
        if not lo < hi:
            raise ValueError(f"bounds must satisfy lo < hi, got {self.bounds}")
        v = self.initial_guess.values
        if v.min() < lo or v.max() > hi:
            raise ValueError("initial guess violates the box constraints")
        if self.initial_guess.grid != cfg.grid:
            raise ShapeMismatch("initial guess grid differs from the acquisition grid")

    @property
    def n_channels(self) -> int:
        return self.data.n_sources

    def source_weights_for_channel(self, l: int) -> np.ndarray:
        if self.channel_weights is not None:
            return self.channel_weights[l]
        w = np.zeros(self.config.array.n_transmitters)
        w[l] = 1.0
        return w

    def compose_draw(self, w: np.ndarray) -> np.ndarray:
        """Physical source weights realizing the draw w over data channels."""
        if self.channel_weights is not None:
            return w @ self.channel_weights
        return w


@dataclass
class OptimizerState:
    """First-order optimizer with per-pixel moment buffers.

    Mutable and single-owner: one reconstruction loop updates it in place.
    """

    kind: str
    step_size: float
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    iteration: int = 0
    m: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]
    v: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def step(self, grad: np.ndarray) -> np.ndarray:
        """Update to subtract from the iterate for an ascent-direction grad."""
        if self.m is None or self.m.shape != grad.shape:
            self.m = np.zeros_like(grad)
            self.v = np.zeros_like(grad)
        self.iteration += 1
        lr = self.step_size
        if self.kind == "sgd":
            return lr * grad
        if self.kind == "momentum":
            self.m = self.momentum * self.m + grad
            return lr * self.m
        if self.kind == "nesterov":
            self.m = self.momentum * self.m + grad
            return lr * (grad + self.momentum * self.m)
        if self.kind == "adam":
            t = self.iteration
            self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
            self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad**2
            m_hat = self.m / (1.0 - self.beta1**t)
            v_hat = self.v / (1.0 - self.beta2**t)
            return lr * m_hat / (np.sqrt(v_hat) + self.eps)
        raise ValueError(f"unknown optimizer kind {self.kind!r}")


def make_optimizer(kind: str = "adam", step_size: float = 1.0, **hyper) -> OptimizerState:
    if kind not in OPTIMIZER_KINDS:
        raise ValueError(f"optimizer kind must be one of {OPTIMIZER_KINDS}, got {kind!r}")
    return OptimizerState(kind=kind, step_size=step_size, **hyper)


def _as_map(problem: FwiProblem, c) -> SoundSpeedMap:
    if isinstance(c, SoundSpeedMap):
        return c
    return SoundSpeedMap(problem.config.grid, c)


def _encoded_data(problem: FwiProblem, w: np.ndarray) -> np.ndarray:
    return np.tensordot(w, problem.data.values, axes=(0, 0))


def _predict_traces(prop: Propagator, source_weights: np.ndarray, store_frames: bool):
    wf = prop.forward(source_weights, store_frames=store_frames)
    return wf


def objective(problem: FwiProblem, c, encoding: np.ndarray | None = None) -> float:
    """Misfit at ``c``: half sum of squared residuals.

    ``encoding`` may be one weight vector over the data channels (the
    stochastic objective for that draw), several rows (summed), or None for
    the full deterministic objective over all channels.
    """
    cmap = _as_map(problem, c)
    prop = Propagator(cmap, problem.config)
    rows = _encoding_rows(problem, encoding)
    total = 0.0
    for w in rows:
        pred = _predict_traces(prop, problem.compose_draw(w), False).traces
        resid = pred - _encoded_data(problem, w)
        total += 0.5 * float((resid * resid).sum())
    return total


def _encoding_rows(problem: FwiProblem, encoding) -> np.ndarray:
    L = problem.n_channels
    if encoding is None:
        return np.eye(L)
    rows = np.asarray(encoding, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows[None, :]
    if rows.ndim != 2 or rows.shape[1] != L:
        raise ShapeMismatch(f"encoding rows must have length {L}, got shape {rows.shape}")
    return rows


def gradient(
    problem: FwiProblem, c, encoding: np.ndarray | None = None, n_workers: int = 1
) -> tuple[np.ndarray, float]:
    """Misfit gradient at ``c`` (image-sized ascent direction) and the misfit.

    One forward (with stored frames) and one adjoint solve per encoding row;
    rows may run in parallel worker threads.
    """
    cmap = _as_map(problem, c)
    prop = Propagator(cmap, problem.config)
    rows = _encoding_rows(problem, encoding)
    grads = [None] * len(rows)
    losses = [0.0] * len(rows)

    def run(idx: int) -> None:
        w = rows[idx]
        wf = _predict_traces(prop, problem.compose_draw(w), True)
        resid = wf.traces - _encoded_data(problem, w)
        losses[idx] = 0.5 * float((resid * resid).sum())
        grads[idx] = prop.adjoint_gradient(resid, wf.frames)

    if n_workers > 1 and len(rows) > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            list(pool.map(run, range(len(rows))))
    else:
        for i in range(len(rows)):
            run(i)
    total = np.zeros((problem.config.grid.nx, problem.config.grid.nx))
    for g in grads:
        total += g
    return total, float(sum(losses))


class IterationRecord(NamedTuple):
    iteration: int
    loss: float
    step_norm: float
    wall_time: float


@dataclass(frozen=True)
class FwiResult:
    """Final iterate plus the per-iteration convergence history."""

    map: SoundSpeedMap
    history: tuple[IterationRecord, ...]

    def log_text(self, include_wall_time: bool = True) -> str:
        """Newline-delimited convergence log.

        The iteration/loss/step-norm columns are bitwise reproducible from
        the seed; wall time is informational and can be dropped for
        byte-comparable logs.
        """
        lines = ["# iteration loss step_norm" + (" wall_time" if include_wall_time else "")]
        for rec in self.history:
            line = f"{rec.iteration} {rec.loss!r} {rec.step_norm!r}"
            if include_wall_time:
                line += f" {rec.wall_time:.3f}"
            lines.append(line)
        return "\n".join(lines) + "\n"


def format_log(result: FwiResult, include_wall_time: bool = True) -> str:
    return result.log_text(include_wall_time)


def reconstruct(
    problem: FwiProblem,
    optimizer: OptimizerState | None = None,
    n_iters: int = 300,
    encoder_kind: str = "rademacher",
    seed: int | None = 0,
    callback: Callable[[IterationRecord, np.ndarray], None] | None = None,
    n_workers: int = 1,
) -> FwiResult:
    """Run the iterative reconstruction loop.

    Each iteration evaluates the misfit and its gradient — for
    ``encoder_kind`` 'rademacher' or 'gaussian' on a fresh random draw over
    the data channels, for 'none' on all channels — applies the optimizer
    update, and projects onto the box constraints. Fully reproducible from
    ``seed``; on solver failure the partial history is attached to the
    raised :class:`FwiError`.
    """
    if n_iters < 1:
        raise ValueError(f"n_iters must be >= 1, got {n_iters}")
    if encoder_kind not in ("none", "rademacher", "gaussian"):
        raise ValueError(f"encoder_kind must be none|rademacher|gaussian, got {encoder_kind!r}")
    opt = optimizer if optimizer is not None else make_optimizer()
    rng = np.random.default_rng(seed)
    lo, hi = problem.bounds
    c = problem.initial_guess.values.copy()
    history: list[IterationRecord] = []
    t0 = time.perf_counter()
    for it in range(n_iters):
        try:
            if encoder_kind == "none":
                grad, loss = gradient(problem, c, None, n_workers=n_workers)
            else:
                w = draw_encoding_vector(encoder_kind, problem.n_channels, rng)
                grad, loss = gradient(problem, c, w, n_workers=n_workers)
        except UsctError as exc:
            partial = FwiResult(
                map=SoundSpeedMap(problem.config.grid, c), history=tuple(history)
            )
            raise FwiError(f"iteration {it}: {exc}", partial=partial) from exc
        update = opt.step(grad)
        c_new = np.clip(c - update, lo, hi)
        rec = IterationRecord(
            iteration=it,
            loss=loss,
            step_norm=float(np.linalg.norm(c_new - c)),
            wall_time=time.perf_counter() - t0,
        )
        history.append(rec)
        c = c_new
        if callback is not None:
            callback(rec, c)
    return FwiResult(map=SoundSpeedMap(problem.config.grid, c), history=tuple(history))
