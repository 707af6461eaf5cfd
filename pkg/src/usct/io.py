"""File formats, noise injection, and reproducibility plumbing.

Container layout (all integers little-endian)::

    8 bytes   ASCII magic: USCTSOSM | USCTMASK | USCTWAVE | USCTENCW
    4 bytes   uint32 version (currently 1)
    4 bytes   uint32 number of dimensions
    4 bytes   uint32 per dimension
    payload   float32 (uint8 for USCTMASK), row-major; the source axis of
              waveform tensors is slowest
    8 bytes   uint64 FNV-1a checksum of the payload bytes

USCTSOSM holds any 2-D float raster (speed-of-sound maps, probability
maps). USCTMASK holds 2-D uint8 rasters (binary masks and tissue labels).
Grid geometry (pixel pitch, padding) travels in config files, not in the
containers.

Writes are atomic: data goes to a temporary file in the target directory
which is renamed into place on completion.
"""

from __future__ import annotations

import math
import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .model import (
    AcquisitionConfig,
    ExcitationPulse,
    Grid2D,
    MeasurementTensor,
    SoundSpeedMap,
    TransducerArray,
    UsctError,
)
from .encoding import EncodingMatrix

__all__ = [
    "FormatError",
    "ChecksumMismatch",
    "UnsupportedVersion",
    "ZeroSignal",
    "fnv1a64",
    "fnv1a64_file",
    "write_raster",
    "read_raster",
    "write_sosmap",
    "read_sosmap",
    "write_mask",
    "read_mask",
    "write_waveform",
    "read_waveform",
    "write_encoder",
    "read_encoder",
    "add_noise",
    "config_to_text",
    "config_from_text",
    "write_config",
    "read_config",
    "DatasetManifest",
    "write_manifest",
    "read_manifest",
    "verify_manifest",
    "container_info",
]

MAGIC_SOSMAP = b"USCTSOSM"
MAGIC_MASK = b"USCTMASK"
MAGIC_WAVE = b"USCTWAVE"
MAGIC_ENCODER = b"USCTENCW"
FORMAT_VERSION = 1
_MAX_DIMS = 8

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = 0xFFFFFFFFFFFFFFFF


class FormatError(UsctError):
    """Malformed container file; the message carries the byte offset."""


class ChecksumMismatch(FormatError):
    """Payload bytes do not match the trailing checksum."""


class UnsupportedVersion(FormatError):
    """Container version is newer than this reader understands."""


class ZeroSignal(UsctError):
    """Cannot scale noise to an all-zero signal."""


def fnv1a64(data) -> int:
    """64-bit FNV-1a hash of a bytes-like object."""
    h = _FNV_OFFSET
    for b in bytes(data):
        h = ((h ^ b) * _FNV_PRIME) & _U64
    return h


def fnv1a64_file(path) -> int:
    """64-bit FNV-1a hash of a whole file."""
    h = _FNV_OFFSET
    with open(path, "rb") as f:
        while chunk := f.read(1 << 20):
            for b in chunk:
                h = ((h ^ b) * _FNV_PRIME) & _U64
    return h


def _atomic_write(path, data: bytes) -> None:
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".usct-tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _pack_container(magic: bytes, array: np.ndarray) -> bytes:
    payload = np.ascontiguousarray(array)
    if payload.dtype != (np.uint8 if magic == MAGIC_MASK else np.float32):
        raise TypeError(f"internal: wrong payload dtype {payload.dtype} for {magic!r}")
    raw = payload.astype(payload.dtype.newbyteorder("<"), copy=False).tobytes()
    head = magic + struct.pack("<II", FORMAT_VERSION, payload.ndim)
    head += struct.pack(f"<{payload.ndim}I", *payload.shape)
    return head + raw + struct.pack("<Q", fnv1a64(raw))


def _unpack_container(blob: bytes, magic: bytes, path) -> np.ndarray:
    name = os.fspath(path)
    if len(blob) < 16:
        raise FormatError(f"{name}: truncated header at byte {len(blob)} (need 16)")
    if blob[:8] != magic:
        raise FormatError(f"{name}: bad magic {blob[:8]!r} at byte 0, expected {magic!r}")
    version, ndim = struct.unpack_from("<II", blob, 8)
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"{name}: unsupported version {version} at byte 8")
    if not 1 <= ndim <= _MAX_DIMS:
        raise FormatError(f"{name}: implausible dimension count {ndim} at byte 12")
    dims_end = 16 + 4 * ndim
    if len(blob) < dims_end:
        raise FormatError(f"{name}: truncated dimension list at byte {len(blob)}")
    shape = struct.unpack_from(f"<{ndim}I", blob, 16)
    if any(s < 1 for s in shape):
        raise FormatError(f"{name}: zero-sized dimension at byte 16")
    dtype = np.dtype(np.uint8 if magic == MAGIC_MASK else np.float32).newbyteorder("<")
    n_bytes = int(np.prod(shape)) * dtype.itemsize
    payload_end = dims_end + n_bytes
    if len(blob) < payload_end + 8:
        raise FormatError(
            f"{name}: truncated payload/checksum at byte {len(blob)} "
            f"(need {payload_end + 8})"
        )
    raw = blob[dims_end:payload_end]
    (stored,) = struct.unpack_from("<Q", blob, payload_end)
    actual = fnv1a64(raw)
    if stored != actual:
        raise ChecksumMismatch(
            f"{name}: checksum {actual:016x} != stored {stored:016x} at byte {payload_end}"
        )
    arr = np.frombuffer(raw, dtype=dtype).reshape(shape)
    return arr.astype(dtype.newbyteorder("="))


def _read_blob(path) -> bytes:
    with open(path, "rb") as f:
        return f.read()


def write_raster(path, values: np.ndarray) -> None:
    """Write a 2-D float raster (speed map, probability map, ...)."""
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim != 2:
        raise FormatError(f"raster must be 2-D, got shape {arr.shape}")
    _atomic_write(path, _pack_container(MAGIC_SOSMAP, arr))


def read_raster(path) -> np.ndarray:
    return _unpack_container(_read_blob(path), MAGIC_SOSMAP, path)


def write_sosmap(path, speed_map: SoundSpeedMap) -> None:
    write_raster(path, speed_map.values)


def read_sosmap(path, grid: Grid2D | None = None) -> SoundSpeedMap:
    """Read a speed map; ``grid`` supplies geometry (default: 0.6 mm, pad 40)."""
    values = read_raster(path)
    if values.shape[0] != values.shape[1]:
        raise FormatError(f"{os.fspath(path)}: speed map must be square, got {values.shape}")
    if grid is None:
        grid = Grid2D(nx=values.shape[0], dx=0.6e-3, pad=40)
    return SoundSpeedMap(grid=grid, values=values.astype(np.float64))


def write_mask(path, values: np.ndarray) -> None:
    """Write a 2-D uint8 raster (binary mask or tissue labels)."""
    arr = np.asarray(values)
    if arr.ndim != 2:
        raise FormatError(f"mask must be 2-D, got shape {arr.shape}")
    _atomic_write(path, _pack_container(MAGIC_MASK, arr.astype(np.uint8)))


def read_mask(path) -> np.ndarray:
    return _unpack_container(_read_blob(path), MAGIC_MASK, path)


def write_waveform(path, tensor: MeasurementTensor) -> None:
    """Write a measurement tensor, source axis slowest, float32 payload."""
    _atomic_write(path, _pack_container(MAGIC_WAVE, tensor.values.astype(np.float32)))


def read_waveform(path, encoded: bool = False) -> MeasurementTensor:
    arr = _unpack_container(_read_blob(path), MAGIC_WAVE, path)
    if arr.ndim != 3:
        raise FormatError(f"{os.fspath(path)}: waveform tensor must be 3-D, got {arr.shape}")
    return MeasurementTensor(values=arr, encoded=encoded)


def write_encoder(path, encoder: EncodingMatrix) -> None:
    _atomic_write(path, _pack_container(MAGIC_ENCODER, encoder.weights.astype(np.float32)))


def read_encoder(path, kind: str = "custom", seed: int | None = None) -> EncodingMatrix:
    arr = _unpack_container(_read_blob(path), MAGIC_ENCODER, path)
    if arr.ndim != 2:
        raise FormatError(f"{os.fspath(path)}: encoder must be 2-D, got {arr.shape}")
    return EncodingMatrix(weights=arr.astype(np.float64), kind=kind, seed=seed)


def container_info(path) -> dict:
    """Header summary (magic, version, shape, payload checksum) of a container."""
    blob = _read_blob(path)
    if len(blob) < 16:
        raise FormatError(f"{os.fspath(path)}: truncated header at byte {len(blob)}")
    magic = blob[:8]
    for known in (MAGIC_SOSMAP, MAGIC_MASK, MAGIC_WAVE, MAGIC_ENCODER):
        if magic == known:
            arr = _unpack_container(blob, known, path)
            return {
                "magic": magic.decode("ascii"),
                "version": FORMAT_VERSION,
                "shape": arr.shape,
                "dtype": str(arr.dtype),
                "size_bytes": len(blob),
            }
    raise FormatError(f"{os.fspath(path)}: bad magic {magic!r} at byte 0")


def add_noise(tensor: MeasurementTensor, snr_db: float, seed: int | None) -> MeasurementTensor:
    """Add i.i.d. white Gaussian noise at the requested signal-to-noise ratio.

    The noise standard deviation is ``rms(values) / 10^(snr_db/20)``; the
    draw is deterministic given ``seed``.
    """
    if not math.isfinite(snr_db):
        raise ValueError(f"snr_db must be finite, got {snr_db}")
    values = tensor.values.astype(np.float64)
    rms = float(np.sqrt(np.mean(values**2)))
    if rms == 0.0:
        raise ZeroSignal("cannot define SNR for an all-zero tensor")
    sigma = rms / 10.0 ** (snr_db / 20.0)
    rng = np.random.default_rng(seed)
    noisy = values + rng.normal(0.0, sigma, size=values.shape)
    return MeasurementTensor(values=noisy, encoded=tensor.encoded)


# ---------------------------------------------------------------------------
# plain-text config files: one `key = value` per line, '#' comments
# ---------------------------------------------------------------------------

_CONFIG_KEYS = (
    "nx",
    "dx",
    "pad",
    "origin_x",
    "origin_y",
    "radius",
    "n_receivers",
    "transmitters",
    "f0",
    "t0",
    "sigma",
    "amplitude",
    "dt",
    "n_steps",
    "c_ref",
)


def _parse_kv_text(text: str, path="<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise FormatError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if key in out and key != "file":
            raise FormatError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def config_to_text(config: AcquisitionConfig) -> str:
    """Serialize an acquisition config; floats use repr and round-trip exactly."""
    g, a, p = config.grid, config.array, config.pulse
    every4 = a.transmitter_indices == tuple(range(0, a.n_receivers, 4))
    tx = "every4" if every4 else ",".join(str(i) for i in a.transmitter_indices)
    lines = [
        "# usct acquisition config",
        f"nx = {g.nx}",
        f"dx = {g.dx!r}",
        f"pad = {g.pad}",
        f"origin_x = {g.origin[0]!r}",
        f"origin_y = {g.origin[1]!r}",
        f"radius = {a.radius!r}",
        f"n_receivers = {a.n_receivers}",
        f"transmitters = {tx}",
        f"f0 = {p.f0!r}",
        f"t0 = {p.t0!r}",
        f"sigma = {p.sigma!r}",
        f"amplitude = {p.amplitude!r}",
        f"dt = {config.dt!r}",
        f"n_steps = {config.n_steps}",
        f"c_ref = {config.c_ref!r}",
    ]
    return "\n".join(lines) + "\n"


def config_from_text(text: str, path="<config>") -> AcquisitionConfig:
    kv = _parse_kv_text(text, path)
    unknown = set(kv) - set(_CONFIG_KEYS)
    if unknown:
        raise FormatError(f"{path}: unknown config keys {sorted(unknown)}")
    missing = set(_CONFIG_KEYS) - set(kv)
    if missing:
        raise FormatError(f"{path}: missing config keys {sorted(missing)}")
    try:
        grid = Grid2D(
            nx=int(kv["nx"]),
            dx=float(kv["dx"]),
            pad=int(kv["pad"]),
            origin=(float(kv["origin_x"]), float(kv["origin_y"])),
        )
        if kv["transmitters"] == "every4":
            tx = None
        else:
            tx = tuple(int(s) for s in kv["transmitters"].split(","))
        array = TransducerArray(
            radius=float(kv["radius"]),
            n_receivers=int(kv["n_receivers"]),
            transmitter_indices=tx,
        )
        pulse = ExcitationPulse(
            f0=float(kv["f0"]),
            t0=float(kv["t0"]),
            sigma=float(kv["sigma"]),
            amplitude=float(kv["amplitude"]),
        )
        return AcquisitionConfig(
            grid=grid,
            array=array,
            pulse=pulse,
            dt=float(kv["dt"]),
            n_steps=int(kv["n_steps"]),
            c_ref=float(kv["c_ref"]),
        )
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_config(path, config: AcquisitionConfig) -> None:
    _atomic_write(path, config_to_text(config).encode("utf-8"))


def read_config(path) -> AcquisitionConfig:
    with open(path, "r", encoding="utf-8") as f:
        return config_from_text(f.read(), path=os.fspath(path))


# ---------------------------------------------------------------------------
# dataset manifests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetManifest:
    """Inventory of one reproducible dataset: provenance plus file checksums."""

    config_hash: str
    encoder: str = "none"
    noise_snr_db: float | None = None
    noise_seed: int | None = None
    phantom_seeds: tuple[int, ...] = ()
    phantom_paths: tuple[str, ...] = ()
    files: tuple[tuple[str, str], ...] = field(default_factory=tuple)


def manifest_to_text(manifest: DatasetManifest) -> str:
    lines = [
        "# usct dataset manifest",
        "version = 1",
        f"config_hash = {manifest.config_hash}",
        f"encoder = {manifest.encoder}",
        f"noise_snr_db = {'none' if manifest.noise_snr_db is None else repr(manifest.noise_snr_db)}",
        f"noise_seed = {'none' if manifest.noise_seed is None else manifest.noise_seed}",
        f"phantom_seeds = {','.join(str(s) for s in manifest.phantom_seeds) or 'none'}",
        f"phantom_paths = {','.join(manifest.phantom_paths) or 'none'}",
    ]
    for rel, checksum in manifest.files:
        lines.append(f"file = {rel} {checksum}")
    return "\n".join(lines) + "\n"


def manifest_from_text(text: str, path="<manifest>") -> DatasetManifest:
    files: list[tuple[str, str]] = []
    kv: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if key == "file":
            parts = value.rsplit(" ", 1)
            if len(parts) != 2:
                raise FormatError(f"{path}:{lineno}: expected 'file = <path> <checksum>'")
            files.append((parts[0], parts[1]))
        elif key in kv:
            raise FormatError(f"{path}:{lineno}: duplicate key {key!r}")
        else:
            kv[key] = value
    required = {"version", "config_hash", "encoder", "noise_snr_db", "noise_seed"}
    missing = required - set(kv)
    if missing:
        raise FormatError(f"{path}: missing manifest keys {sorted(missing)}")
    if kv["version"] != "1":
        raise UnsupportedVersion(f"{path}: unsupported manifest version {kv['version']}")
    seeds = kv.get("phantom_seeds", "none")
    paths = kv.get("phantom_paths", "none")
    return DatasetManifest(
        config_hash=kv["config_hash"],
        encoder=kv["encoder"],
        noise_snr_db=None if kv["noise_snr_db"] == "none" else float(kv["noise_snr_db"]),
        noise_seed=None if kv["noise_seed"] == "none" else int(kv["noise_seed"]),
        phantom_seeds=() if seeds == "none" else tuple(int(s) for s in seeds.split(",")),
        phantom_paths=() if paths == "none" else tuple(paths.split(",")),
        files=tuple(files),
    )


def write_manifest(path, manifest: DatasetManifest) -> None:
    _atomic_write(path, manifest_to_text(manifest).encode("utf-8"))


def read_manifest(path) -> DatasetManifest:
    with open(path, "r", encoding="utf-8") as f:
        return manifest_from_text(f.read(), path=os.fspath(path))


def verify_manifest(manifest: DatasetManifest, root) -> None:
    """Check that every referenced file exists and matches its checksum."""
    for rel, stored in manifest.files:
        full = os.path.join(os.fspath(root), rel)
        if not os.path.exists(full):
            raise FormatError(f"manifest references missing file {rel}")
        actual = f"{fnv1a64_file(full):016x}"
        if actual != stored:
            raise ChecksumMismatch(f"{rel}: checksum {actual} != manifest {stored}")
