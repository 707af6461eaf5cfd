"""Image-quality and tumor-detection metrics.

The detection metrics work on a per-pixel tumor probability map and a
binary truth mask. "Tumor-wise" means instances: the true positive rate
counts true tumors touched by at least one above-threshold pixel, while the
false positive rate stays pixel-wise. The Dice score likewise counts
detected components against true tumors rather than pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .model import ShapeMismatch, UsctError

__all__ = [
    "DEFAULT_PROBABILITY_THRESHOLD",
    "AssessError",
    "NoTumors",
    "RocCurve",
    "rmse",
    "ssim",
    "roc",
    "select_threshold",
    "dice",
    "connected_components",
    "assessment_report",
]

# Default segmentation threshold for observer probability maps, chosen from
# ROC analysis of the reference observer; override per study as needed.
DEFAULT_PROBABILITY_THRESHOLD = 0.02

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


class AssessError(UsctError):
    """Metric inputs violate a precondition."""


class NoTumors(AssessError):
    """Tumor-wise rates are undefined for an empty truth mask."""


def _as_image(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeMismatch(f"shape mismatch: {a.shape} vs {b.shape}")


def _as_probability(prob) -> np.ndarray:
    arr = _as_image(prob, "probability map")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise AssessError("probability map values must lie in [0, 1]")
    return arr


def rmse(estimate, truth) -> float:
    """Relative l2 error ||estimate - truth|| / ||truth|| over image pixels.

    Accepts arrays or SoundSpeedMap-like objects with a ``values`` attribute.
    """
    est = _as_image(getattr(estimate, "values", estimate), "estimate")
    tru = _as_image(getattr(truth, "values", truth), "truth")
    _check_same_shape(est, tru)
    denom = float(np.linalg.norm(tru))
    if denom == 0.0:
        raise AssessError("relative error undefined for an all-zero truth image")
    return float(np.linalg.norm(est - tru) / denom)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    w1 = np.exp(-(x**2) / (2.0 * sigma**2))
    w = np.outer(w1, w1)
    return w / w.sum()


def _windowed_mean(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    # 'valid' correlation with a symmetric separable-equivalent window
    from scipy.signal import fftconvolve

    return fftconvolve(img, window, mode="valid")


def ssim(
    estimate,
    truth,
    window: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
    data_range: float | None = None,
) -> float:
    """Mean structural similarity with a Gaussian-weighted window.

    Local means/variances/covariance use an 11x11 Gaussian window
    (sigma 1.5) evaluated where it fits entirely inside the image. The
    dynamic range defaults to the joint value range of both images, which
    keeps the metric symmetric in its arguments; for a degenerate range
    (two identical constant images) the score is 1 by definition.
    """
    est = _as_image(getattr(estimate, "values", estimate), "estimate")
    tru = _as_image(getattr(truth, "values", truth), "truth")
    _check_same_shape(est, tru)
    if window % 2 != 1 or window > min(tru.shape):
        raise AssessError(f"window must be odd and fit the image, got {window}")
    if data_range is None:
        lo = min(est.min(), tru.min())
        hi = max(est.max(), tru.max())
        data_range = float(hi - lo)
    if data_range == 0.0:
        if np.array_equal(est, tru):
            return 1.0
        raise AssessError("zero dynamic range with non-identical images")
    if data_range < 0.0:
        raise AssessError(f"data_range must be positive, got {data_range}")

    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    w = _gaussian_window(window, sigma)
    mu_e = _windowed_mean(est, w)
    mu_t = _windowed_mean(tru, w)
    mu_ee = _windowed_mean(est * est, w)
    mu_tt = _windowed_mean(tru * tru, w)
    mu_et = _windowed_mean(est * tru, w)
    var_e = mu_ee - mu_e**2
    var_t = mu_tt - mu_t**2
    cov = mu_et - mu_e * mu_t
    ssim_map = ((2 * mu_e * mu_t + c1) * (2 * cov + c2)) / (
        (mu_e**2 + mu_t**2 + c1) * (var_e + var_t + c2)
    )
    return float(ssim_map.mean())


def connected_components(binary) -> tuple[np.ndarray, int]:
    """8-connected component labeling of a binary image.

    Labels are assigned 1..n in order of each component's first pixel in a
    row-major scan, so the labeling is deterministic.
    """
    arr = np.asarray(binary)
    if arr.ndim != 2:
        raise ShapeMismatch(f"binary image must be 2-D, got shape {arr.shape}")
    labels, n = ndimage.label(arr.astype(bool), structure=_EIGHT_CONNECTED)
    if n == 0:
        return labels, 0
    flat = labels.ravel()
    nonzero = flat[flat > 0]
    uniq, first_pos = np.unique(nonzero, return_index=True)
    remap = np.zeros(n + 1, dtype=labels.dtype)
    remap[uniq[np.argsort(first_pos)]] = np.arange(1, n + 1)
    return remap[labels], n


@dataclass(frozen=True)
class RocCurve:
    """Mixed ROC: tumor-wise TPR against pixel-wise FPR per threshold.

    ``thresholds`` descend; ``fpr``/``tpr`` are parallel arrays. ``auc`` is
    the trapezoid area over the FPR axis with (0,0) and (1,1) anchors.
    ``no_tumors`` flags an empty truth mask, in which case TPR and AUC are
    NaN but the FPR sweep is still usable.
    """

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float
    no_tumors: bool = False


def roc(prob, mask, thresholds=None) -> RocCurve:
    """Sweep detection thresholds over a probability map.

    At threshold t the detection set is ``prob >= t``. Tumor-wise TPR
    credits each true tumor (8-connected component of ``mask``) touched by
    at least one detection pixel; pixel-wise FPR counts detection pixels
    outside the mask. ``thresholds`` defaults to every distinct probability
    value, which makes the curve (and its AUC) invariant under strictly
    monotone remappings of the map.
    """
    p = _as_probability(prob)
    m = np.asarray(mask).astype(bool)
    _check_same_shape(p, m)

    if thresholds is None:
        taus = np.unique(p)[::-1]
    else:
        taus = np.sort(np.asarray(thresholds, dtype=np.float64))[::-1]
        if taus.size == 0:
            raise AssessError("need at least one threshold")
        if taus.min() < 0.0 or taus.max() > 1.0:
            raise AssessError("thresholds must lie in [0, 1]")

    tumor_labels, n_tumors = connected_components(m)
    outside = ~m
    n_outside = int(outside.sum())
    out_vals = np.sort(p[outside])

    # pixel-wise FPR via binary search over the sorted outside values
    if n_outside:
        fpr = (n_outside - np.searchsorted(out_vals, taus, side="left")) / n_outside
    else:
        fpr = np.zeros_like(taus)

    no_tumors = n_tumors == 0
    if no_tumors:
        tpr = np.full_like(taus, np.nan)
        auc = float("nan")
    else:
        # tumor credited iff its max probability clears the threshold
        tumor_max = ndimage.maximum(p, labels=tumor_labels, index=np.arange(1, n_tumors + 1))
        tumor_max = np.atleast_1d(tumor_max)
        tpr = (tumor_max[None, :] >= taus[:, None]).sum(axis=1) / n_tumors
        order = np.argsort(fpr, kind="stable")
        fx = np.concatenate([[0.0], fpr[order], [1.0]])
        fy = np.concatenate([[0.0], tpr[order], [1.0]])
        auc = float(np.trapezoid(fy, fx))

    return RocCurve(
        thresholds=taus, fpr=np.asarray(fpr, dtype=np.float64), tpr=tpr, auc=auc,
        no_tumors=no_tumors,
    )


def select_threshold(curve: RocCurve) -> float:
    """Threshold whose (FPR, TPR) point is closest to the ideal corner (0, 1).

    Ties break toward the larger threshold.
    """
    if curve.no_tumors or curve.thresholds.size == 0:
        raise NoTumors("cannot select an operating point without true tumors")
    d2 = curve.fpr**2 + (1.0 - curve.tpr) ** 2
    best = int(np.argmin(d2))  # thresholds descend, argmin takes the first=largest
    return float(curve.thresholds[best])


def dice(prob, mask, threshold: float, min_iou: float = 0.0) -> float:
    """Tumor-wise Dice: 2 * true detections / (detections + true tumors).

    Detections are 8-connected components of ``prob >= threshold``. A
    detection can claim a tumor it overlaps by at least one pixel
    (optionally requiring the pair's IoU to reach ``min_iou``); true
    detections are a maximum pairing of detections to tumors with each side
    used at most once, so the score stays in [0, 1] and reaches 1 exactly
    when detections and tumors biject. Returns 1.0 when there are neither
    detections nor tumors.
    """
    p = _as_probability(prob)
    m = np.asarray(mask).astype(bool)
    _check_same_shape(p, m)
    if not 0.0 <= threshold <= 1.0:
        raise AssessError(f"threshold must lie in [0, 1], got {threshold}")

    det_labels, n_det = connected_components(p >= threshold)
    tum_labels, n_tum = connected_components(m)
    if n_det == 0 and n_tum == 0:
        return 1.0
    if n_det == 0 or n_tum == 0:
        return 0.0

    edges = np.zeros((n_det, n_tum), dtype=bool)
    for t in range(1, n_tum + 1):
        tumor = tum_labels == t
        overlapping = np.unique(det_labels[tumor])
        for d in overlapping[overlapping > 0]:
            if min_iou <= 0.0:
                edges[d - 1, t - 1] = True
            else:
                det = det_labels == d
                inter = float(np.logical_and(det, tumor).sum())
                union = float(np.logical_or(det, tumor).sum())
                if union > 0 and inter / union >= min_iou:
                    edges[d - 1, t - 1] = True
    credited = _maximum_matching(edges)
    return 2.0 * credited / (n_det + n_tum)


def _maximum_matching(edges: np.ndarray) -> int:
    """Size of a maximum bipartite matching (augmenting-path search)."""
    n_left, n_right = edges.shape
    match_right = np.full(n_right, -1)

    def try_assign(u: int, seen: np.ndarray) -> bool:
        for v in np.flatnonzero(edges[u]):
            if seen[v]:
                continue
            seen[v] = True
            if match_right[v] == -1 or try_assign(match_right[v], seen):
                match_right[v] = u
                return True
        return False

    size = 0
    for u in range(n_left):
        if try_assign(u, np.zeros(n_right, dtype=bool)):
            size += 1
    return size


def assessment_report(
    estimate,
    truth,
    prob=None,
    mask=None,
    threshold: float | None = None,
) -> dict:
    """Bundle of the standard metrics for one reconstruction.

    Always contains RMSE and SSIM; adds AUC, the selected operating point,
    and Dice when a probability map and truth mask are supplied. When
    ``threshold`` is None the Dice threshold comes from the ROC corner.
    """
    report: dict = {
        "rmse": rmse(estimate, truth),
        "ssim": ssim(estimate, truth),
    }
    if prob is not None and mask is not None:
        curve = roc(prob, mask)
        report["auc"] = curve.auc
        tau = threshold
        if tau is None:
            tau = select_threshold(curve)
        report["threshold"] = float(tau)
        report["dice"] = dice(prob, mask, float(tau))
    return report
