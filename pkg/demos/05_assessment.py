"""
Image-quality and tumor-detection metrics
=========================================

RMSE and SSIM compare a reconstruction against the truth pixel-wise;
the detection metrics work tumor-wise on a per-pixel probability map:
a mixed ROC (tumor-wise TPR vs pixel-wise FPR), its AUC, the threshold at
the ROC's upper-left corner, and the tumor-wise Dice score.
"""

import numpy as np
from scipy.ndimage import gaussian_filter

from usct import Grid2D, default_spec, dice, generate, rmse, roc, select_threshold, ssim

grid = Grid2D(nx=96, dx=1.0e-3, pad=12)
ph = generate(default_spec("B", grid.fov, seed=21), grid)
truth = ph.map.values

# a fake "reconstruction": blurred truth plus noise
rng = np.random.default_rng(0)
recon = gaussian_filter(truth, 1.2) + rng.normal(0.0, 4.0, truth.shape)

print(f"rmse: {rmse(recon, truth):.4f}")
print(f"ssim: {ssim(recon, truth):.4f}")

# a fake observer output: probability high near true tumors, with one
# hallucinated blob; a real observer model produces this map instead
prob = gaussian_filter(ph.tumor_mask.astype(float), 2.0)
prob += 0.4 * np.exp(-((np.arange(96)[:, None] - 20) ** 2 + (np.arange(96)[None, :] - 70) ** 2) / 30.0)
prob = np.clip(prob / prob.max() + rng.normal(0, 0.01, prob.shape), 0.0, 1.0)

curve = roc(prob, ph.tumor_mask)
print(f"auc:  {curve.auc:.4f}")

tau = select_threshold(curve)
print(f"threshold at the ROC corner: {tau:.4f}")
print(f"dice at that threshold: {dice(prob, ph.tumor_mask, tau):.4f}")
print(f"dice at the fixed default 0.02: {dice(prob, ph.tumor_mask, 0.02):.4f}")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    plt = None

if plt is not None:
    fig, axes = plt.subplots(1, 4, figsize=(13, 3.2))
    axes[0].imshow(truth.T, origin="lower", cmap="viridis")
    axes[0].set_title("truth")
    axes[1].imshow(recon.T, origin="lower", cmap="viridis")
    axes[1].set_title("reconstruction")
    axes[2].imshow(prob.T, origin="lower", cmap="inferno")
    axes[2].set_title("tumor probability")
    axes[3].plot(curve.fpr, curve.tpr, "-o", ms=2)
    axes[3].set_xlabel("pixel-wise FPR")
    axes[3].set_ylabel("tumor-wise TPR")
    axes[3].set_title(f"ROC, AUC={curve.auc:.3f}")
    fig.tight_layout()
    fig.savefig("demo05_assessment.png", dpi=120)
    print("wrote demo05_assessment.png")
