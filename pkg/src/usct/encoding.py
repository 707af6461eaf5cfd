"""Source encoding: weight matrices over physical sources and their action.

An encoding matrix W (L x I) maps I physical sources to L encoded channels.
Applied to a measurement tensor it contracts the source axis,
``out[l,k,j] = sum_i W[l,i] D[i,k,j]``; applied to the excitation it
superposes the per-source pulses with the row weights, which the wave
solver realizes in a single shot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import AcquisitionConfig, ExcitationPulse, MeasurementTensor, ShapeMismatch, UsctError

__all__ = [
    "ENCODER_KINDS",
    "InvalidShape",
    "AlreadyEncoded",
    "EncodingMatrix",
    "EncodedSource",
    "make_encoder",
    "encode_tensor",
    "encode_source",
    "draw_encoding_vector",
]

ENCODER_KINDS = ("identity", "subsample", "rademacher", "gaussian", "custom")


class InvalidShape(ShapeMismatch):
    """Encoder dimensions are inconsistent or unsupported."""


class AlreadyEncoded(UsctError):
    """Refusing to encode a tensor that is already encoded."""


@dataclass(frozen=True)
class EncodingMatrix:
    """L x I encoding weights; rows are the encoding vectors w_l."""

    weights: np.ndarray
    kind: str = "custom"
    seed: int | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise InvalidShape(f"weights must be 2-D, got shape {w.shape}")
        if self.kind not in ENCODER_KINDS:
            raise InvalidShape(f"unknown encoder kind {self.kind!r}")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def l_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def i_sources(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class EncodedSource:
    """Simultaneous firing of all transmitters, each scaled by a weight."""

    weights: np.ndarray
    pulse: ExcitationPulse


def make_encoder(kind: str, l_channels: int, i_sources: int, seed: int | None = None) -> EncodingMatrix:
    """Build an encoding matrix of the given kind.

    * ``identity``: requires L == I.
    * ``subsample``: one-hot rows keeping every (I/L)-th source starting at
      source 0; requires I divisible by L.
    * ``rademacher``: i.i.d. +-1 entries.
    * ``gaussian``: i.i.d. standard normal entries.

    Random kinds are reproducible from (kind, seed, L, I); entries are
    rounded to float32 so encoders survive container round trips bit-exactly.
    """
    L, I = int(l_channels), int(i_sources)
    if not (1 <= L <= I):
        raise InvalidShape(f"need 1 <= L <= I, got L={L}, I={I}")
    if kind == "identity":
        if L != I:
            raise InvalidShape(f"identity encoder requires L == I, got L={L}, I={I}")
        w = np.eye(I)
    elif kind == "subsample":
        if I % L != 0:
            raise InvalidShape(f"subsample requires I divisible by L, got L={L}, I={I}")
        w = np.zeros((L, I))
        w[np.arange(L), np.arange(L) * (I // L)] = 1.0
    elif kind == "rademacher":
        rng = np.random.default_rng(seed)
        w = rng.integers(0, 2, size=(L, I)).astype(np.float64) * 2.0 - 1.0
    elif kind == "gaussian":
        rng = np.random.default_rng(seed)
        w = rng.standard_normal((L, I)).astype(np.float32).astype(np.float64)
    else:
        raise InvalidShape(f"unknown encoder kind {kind!r}")
    return EncodingMatrix(weights=w, kind=kind, seed=seed)


def encode_tensor(
    encoder: EncodingMatrix, data: MeasurementTensor, allow_chained: bool = False
) -> MeasurementTensor:
    """Contract the source axis of ``data`` with the encoder rows.

    Chained encodings are rejected unless ``allow_chained`` is set; silently
    double-encoding is almost always a mistake.
    """
    if data.encoded and not allow_chained:
        raise AlreadyEncoded(
            "tensor is already encoded; pass allow_chained=True to compose encodings"
        )
    if encoder.i_sources != data.n_sources:
        raise ShapeMismatch(
            f"encoder expects {encoder.i_sources} sources, tensor has {data.n_sources}"
        )
    out = np.tensordot(encoder.weights, data.values, axes=(1, 0))
    return MeasurementTensor(values=out, encoded=True)


def encode_source(weights: np.ndarray, config: AcquisitionConfig) -> EncodedSource:
    """Describe the superposed excitation s_w = sum_i w_i s_i for one row w."""
    w = np.asarray(weights, dtype=np.float64)
    I = config.array.n_transmitters
    if w.shape != (I,):
        raise ShapeMismatch(f"encoding vector must have length {I}, got shape {w.shape}")
    return EncodedSource(weights=w, pulse=config.pulse)


def draw_encoding_vector(kind: str, i_sources: int, rng: np.random.Generator) -> np.ndarray:
    """Draw one stochastic encoding vector (zero mean, identity covariance)."""
    if kind == "rademacher":
        return rng.integers(0, 2, size=i_sources).astype(np.float64) * 2.0 - 1.0
    if kind == "gaussian":
        return rng.standard_normal(i_sources)
    raise InvalidShape(f"unknown stochastic encoder kind {kind!r}")
