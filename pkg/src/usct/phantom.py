"""Stochastic breast-mimicking speed-of-sound phantoms with tumor truth.

Phantoms are built from simple geometric primitives: a water background, a
breast disk with a thin skin ring, smoothed elliptical fibroglandular
blobs placed until a per-class area fraction is met, and elliptical tumor
inclusions. Four density classes (A through D) differ in their target
fibroglandular fraction. Tissue speeds are drawn once per phantom within
configurable per-tissue ranges; the defaults are physiologically plausible
placeholders, not ground truth.

The generator is deterministic given (spec, seed): identical inputs give
bitwise-identical phantoms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .model import Grid2D, ShapeMismatch, SoundSpeedMap, UsctError
from . import io as usct_io
from .assess import connected_components

__all__ = [
    "WATER",
    "FAT",
    "SKIN",
    "FIBROGLANDULAR",
    "TUMOR",
    "TISSUE_NAMES",
    "DENSITY_CLASSES",
    "InfeasibleSpec",
    "InvariantViolation",
    "PhantomSpec",
    "LabeledPhantom",
    "default_spec",
    "generate",
    "save_phantom",
    "load_raster",
]

WATER, FAT, SKIN, FIBROGLANDULAR, TUMOR = 0, 1, 2, 3, 4
TISSUE_NAMES = {WATER: "water", FAT: "fat", SKIN: "skin", FIBROGLANDULAR: "fibroglandular", TUMOR: "tumor"}

# Target fibroglandular area fraction per density class, least to most dense.
DENSITY_CLASSES = {
    "A": (0.05, 0.15),
    "B": (0.15, 0.35),
    "C": (0.35, 0.60),
    "D": (0.60, 0.85),
}

# Per-tissue (mean, spread) speeds in m/s; one value per tissue is drawn
# uniformly from mean +- spread for each phantom.
DEFAULT_TISSUE_SPEEDS = {
    "water": (1500.0, 0.0),
    "fat": (1460.0, 20.0),
    "skin": (1625.0, 25.0),
    "fibroglandular": (1545.0, 35.0),
    "tumor": (1575.0, 25.0),
}

_MAX_BLOB_TRIES = 600
_MAX_TUMOR_TRIES = 200
_MIN_TUMOR_PIXELS = 4


class InfeasibleSpec(UsctError):
    """The spec cannot be realized on this grid within bounded retries."""


class InvariantViolation(UsctError):
    """A loaded or constructed phantom breaks a structural invariant."""


@dataclass(frozen=True)
class PhantomSpec:
    """Recipe for one stochastic phantom population."""

    density_class: str
    breast_radius_range: tuple[float, float]
    fibroglandular_fraction_range: tuple[float, float]
    n_tumors_range: tuple[int, int]
    tumor_radius_range: tuple[float, float]
    tissue_speeds: dict[str, tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_TISSUE_SPEEDS)
    )
    skin_thickness: float = 1.5e-3
    seed: int = 0

    def __post_init__(self):
        if self.density_class not in DENSITY_CLASSES:
            raise ValueError(f"density_class must be one of {sorted(DENSITY_CLASSES)}")
        for name, (lo, hi) in (
            ("breast_radius_range", self.breast_radius_range),
            ("tumor_radius_range", self.tumor_radius_range),
        ):
            if not (0 < lo <= hi):
                raise ValueError(f"{name} must be ordered and positive, got ({lo}, {hi})")
        lo, hi = self.fibroglandular_fraction_range
        if not (0 <= lo <= hi <= 1):
            raise ValueError(f"fibroglandular fraction range must lie in [0,1], got ({lo}, {hi})")
        nlo, nhi = self.n_tumors_range
        if not (0 <= nlo <= nhi):
            raise ValueError(f"n_tumors_range must be ordered and nonnegative, got ({nlo}, {nhi})")
        for tissue, (mean, spread) in self.tissue_speeds.items():
            if mean - spread <= 0:
                raise ValueError(f"{tissue} speed range reaches zero")


@dataclass(frozen=True)
class LabeledPhantom:
    """Speed map plus tissue labels and the binary tumor truth mask."""

    map: SoundSpeedMap
    tissue_labels: np.ndarray
    tumor_mask: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.tissue_labels, dtype=np.uint8)
        mask = np.asarray(self.tumor_mask).astype(bool)
        shape = self.map.values.shape
        if labels.shape != shape or mask.shape != shape:
            raise ShapeMismatch("labels/mask shape must match the speed map")
        if np.any(mask & (labels != TUMOR)):
            raise InvariantViolation("tumor mask marks pixels not labeled as tumor")
        if labels.max(initial=0) > TUMOR:
            raise InvariantViolation("unknown tissue label")
        comp, n = connected_components(mask)
        for t in range(1, n + 1):
            if (comp == t).sum() < _MIN_TUMOR_PIXELS:
                raise InvariantViolation(
                    f"tumor component {t} smaller than {_MIN_TUMOR_PIXELS} pixels"
                )
        labels = labels.copy()
        labels.setflags(write=False)
        mask = mask.copy()
        mask.setflags(write=False)
        object.__setattr__(self, "tissue_labels", labels)
        object.__setattr__(self, "tumor_mask", mask)

    @property
    def n_tumors(self) -> int:
        return connected_components(self.tumor_mask)[1]


def default_spec(density_class: str, fov: float, seed: int = 0) -> PhantomSpec:
    """Class defaults scaled to a field of view (meters)."""
    if density_class not in DENSITY_CLASSES:
        raise ValueError(f"density_class must be one of {sorted(DENSITY_CLASSES)}")
    return PhantomSpec(
        density_class=density_class,
        breast_radius_range=(0.25 * fov, 0.36 * fov),
        fibroglandular_fraction_range=DENSITY_CLASSES[density_class],
        n_tumors_range=(1, 3),
        tumor_radius_range=(0.022 * fov, 0.05 * fov),
        skin_thickness=0.012 * fov,
        seed=seed,
    )


def _ellipse(X, Y, cx, cy, a, b, theta) -> np.ndarray:
    ct, st = np.cos(theta), np.sin(theta)
    xr = (X - cx) * ct + (Y - cy) * st
    yr = -(X - cx) * st + (Y - cy) * ct
    return (xr / a) ** 2 + (yr / b) ** 2 <= 1.0


def generate(spec: PhantomSpec, grid: Grid2D) -> LabeledPhantom:
    """Draw one phantom on the image grid.

    Raises
    ------
    InfeasibleSpec
        If the breast cannot fit the grid, the fibroglandular fraction
        cannot be reached, or a tumor cannot be placed within bounded
        retries.
    """
    rng = np.random.default_rng(spec.seed)
    fov = grid.fov
    t_skin = max(spec.skin_thickness, 1.5 * grid.dx)
    r_lo, r_hi = spec.breast_radius_range
    if r_hi + t_skin > 0.48 * fov:
        raise InfeasibleSpec(
            f"breast radius up to {r_hi:.4g} m (plus skin) does not fit a {fov:.4g} m field of view"
        )

    coords = grid.axis_coords()
    X, Y = np.meshgrid(coords, coords, indexing="ij")
    gx, gy = grid.center

    breast_r = rng.uniform(r_lo, r_hi)
    slack = 0.48 * fov - breast_r - t_skin
    bx = gx + rng.uniform(-slack, slack) * 0.5
    by = gy + rng.uniform(-slack, slack) * 0.5

    dist = np.hypot(X - bx, Y - by)
    breast = dist <= breast_r
    interior = dist <= breast_r - t_skin
    skin = breast & ~interior
    n_breast = int(breast.sum())
    if n_breast == 0:
        raise InfeasibleSpec("breast disk contains no pixels at this resolution")

    # tumors first: ellipses fully inside the interior, pairwise separated.
    # Their pixels are excluded from the fibroglandular accounting below so
    # the final label fractions land inside the class range.
    n_tumors = int(rng.integers(spec.n_tumors_range[0], spec.n_tumors_range[1] + 1))
    tumor_mask = np.zeros(X.shape, dtype=bool)
    placed = 0
    for _ in range(n_tumors):
        ok = False
        for _ in range(_MAX_TUMOR_TRIES):
            rt = rng.uniform(*spec.tumor_radius_range)
            ratio = rng.uniform(0.6, 1.0)
            theta = rng.uniform(0.0, np.pi)
            margin = breast_r - t_skin - rt - grid.dx
            if margin <= 0:
                continue
            rad = rng.uniform(0.0, margin)
            ang = rng.uniform(0.0, 2.0 * np.pi)
            tum = _ellipse(X, Y, bx + rad * np.cos(ang), by + rad * np.sin(ang), rt, rt * ratio, theta)
            if tum.sum() < _MIN_TUMOR_PIXELS:
                continue
            if np.any(tum & ~interior):
                continue
            # keep a one-pixel gutter so components stay separate
            if np.any(ndimage.binary_dilation(tum, structure=np.ones((3, 3), bool)) & tumor_mask):
                continue
            tumor_mask |= tum
            ok = True
            break
        if not ok:
            raise InfeasibleSpec(
                f"placed {placed} of {n_tumors} tumors within {_MAX_TUMOR_TRIES} tries each"
            )
        placed += 1

    # fibroglandular structure: random smoothed ellipses, either grown on a
    # fatty interior or (for dense targets) carved as fat out of a dense
    # interior. Either way the measured fraction lands inside the class range.
    frac_lo, frac_hi = spec.fibroglandular_fraction_range
    fibro_room = interior & ~tumor_mask
    interior_ratio = fibro_room.sum() / n_breast  # ceiling: skin/water/tumor never convert
    feasible_hi = min(frac_hi, 0.95 * interior_ratio)
    if feasible_hi < frac_lo:
        raise InfeasibleSpec(
            f"fraction range ({frac_lo}, {frac_hi}) unreachable: interior is only "
            f"{interior_ratio:.2f} of the breast at this skin thickness"
        )
    # keep the target strictly inside the band so the landing window
    # (range edge to target) has positive width for the blob loop
    span = feasible_hi - frac_lo
    target = frac_lo + span * rng.uniform(0.15, 0.85)
    smooth_px = max(1.0, 0.015 * breast_r / grid.dx)
    canvas = np.zeros(X.shape, dtype=np.float64)
    axis_hi = 0.30 * (breast_r - t_skin)
    carve = target > 0.55 * interior_ratio

    def blobs_mask(c) -> np.ndarray:
        return ndimage.gaussian_filter(c, smooth_px) > 0.45

    def fibro_from(c) -> np.ndarray:
        if carve:
            return ~blobs_mask(c) & fibro_room
        return blobs_mask(c) & fibro_room

    def in_range(frac: float) -> bool:
        # the side we could overshoot past: the floor when carving, the
        # ceiling when growing
        return (frac >= frac_lo) if carve else (frac <= frac_hi)

    def done(frac: float) -> bool:
        return (frac <= target) if carve else (frac >= target)

    fibro = fibro_from(canvas)
    tries = 0
    shrink = 1.0
    while not done(fibro.sum() / n_breast):
        tries += 1
        if tries > _MAX_BLOB_TRIES:
            raise InfeasibleSpec(
                f"could not reach fibroglandular fraction {target:.3f} "
                f"after {_MAX_BLOB_TRIES} blobs"
            )
        rad = rng.uniform(0.0, 0.8 * (breast_r - t_skin))
        ang = rng.uniform(0.0, 2.0 * np.pi)
        a = rng.uniform(0.3, 1.0) * axis_hi * shrink
        b = a * rng.uniform(0.45, 1.0)
        theta = rng.uniform(0.0, np.pi)
        blob = _ellipse(X, Y, bx + rad * np.cos(ang), by + rad * np.sin(ang), a, b, theta)
        candidate = canvas + blob
        new_fibro = fibro_from(candidate)
        new_frac = new_fibro.sum() / n_breast
        if done(new_frac) and not in_range(new_frac):
            shrink = max(0.25, shrink * 0.7)  # overshot the range: smaller blobs
            continue
        canvas = candidate
        fibro = new_fibro

    labels = np.full(X.shape, WATER, dtype=np.uint8)
    labels[breast] = FAT
    labels[skin] = SKIN
    labels[fibro] = FIBROGLANDULAR
    labels[tumor_mask] = TUMOR

    speeds = {}
    for tissue, (mean, spread) in spec.tissue_speeds.items():
        speeds[tissue] = mean + (rng.uniform(-spread, spread) if spread > 0 else 0.0)
    lookup = np.array(
        [speeds["water"], speeds["fat"], speeds["skin"], speeds["fibroglandular"], speeds["tumor"]]
    )
    # round to float32 so container round trips are bit-exact
    values = lookup[labels].astype(np.float32).astype(np.float64)
    return LabeledPhantom(
        map=SoundSpeedMap(grid, values), tissue_labels=labels, tumor_mask=tumor_mask
    )


def _phantom_paths(path) -> tuple[str, str, str]:
    import os

    stem = os.fspath(path)
    if stem.endswith(".sos"):
        stem = stem[: -len(".sos")]
    return stem + ".sos", stem + ".labels.msk", stem + ".mask.msk"


def save_phantom(phantom: LabeledPhantom, path) -> tuple[str, str, str]:
    """Write the speed map, tissue labels, and tumor mask next to each other.

    ``path`` may be a bare stem or a ``.sos`` path; returns the three file
    paths written.
    """
    sos, labels, mask = _phantom_paths(path)
    usct_io.write_sosmap(sos, phantom.map)
    usct_io.write_mask(labels, phantom.tissue_labels)
    usct_io.write_mask(mask, phantom.tumor_mask.astype(np.uint8))
    return sos, labels, mask


def load_raster(path, grid: Grid2D | None = None) -> LabeledPhantom:
    """Load a phantom written by :func:`save_phantom` (or external tooling).

    Validates structural invariants; a zero or negative speed pixel, a
    tumor-mask pixel outside tumor-labeled tissue, or an undersized tumor
    component raise :class:`InvariantViolation`.
    """
    from .model import InvalidMedium

    sos, labels_path, mask_path = _phantom_paths(path)
    try:
        speed_map = usct_io.read_sosmap(sos, grid=grid)
    except InvalidMedium as exc:
        raise InvariantViolation(str(exc)) from exc
    labels = usct_io.read_mask(labels_path)
    mask = usct_io.read_mask(mask_path)
    return LabeledPhantom(map=speed_map, tissue_labels=labels, tumor_mask=mask.astype(bool))
