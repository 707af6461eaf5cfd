"""
Source encoding
===============

Encoding compresses the source axis of the data: an L x I weight matrix
turns I per-source shots into L superposed channels. Because the wave
equation is linear in the excitation, firing the weighted superposition in
one solve gives the same traces as weighting the per-source solves - and a
random encoding makes the cheap one-solve misfit an unbiased estimate of
the full misfit.
"""

import numpy as np

from usct import (
    SoundSpeedMap,
    encode_tensor,
    forward_solve,
    make_encoder,
    simulate_acquisition,
)
from usct.model import AcquisitionConfig, ExcitationPulse, Grid2D, TransducerArray

grid = Grid2D(nx=60, dx=1.0e-3, pad=12)
array = TransducerArray(radius=24.0e-3, n_receivers=16, transmitter_indices=(0, 4, 8, 12))
pulse = ExcitationPulse(f0=3.0e5, t0=6.0e-6, sigma=2.0e-6)
config = AcquisitionConfig(grid=grid, array=array, pulse=pulse, dt=0.3e-6, n_steps=200)

x = grid.axis_coords()
X, Y = np.meshgrid(x, x, indexing="ij")
medium = SoundSpeedMap(grid, 1500.0 + 30.0 * np.exp(-(X**2 + Y**2) / (2 * 0.008**2)))

# the four encoder families
for kind, L in [("identity", 4), ("subsample", 2), ("rademacher", 2), ("gaussian", 2)]:
    enc = make_encoder(kind, L, 4, seed=7)
    print(f"{kind:>10}: W =\n{np.array2string(enc.weights, precision=2)}")

# encoding the data tensor contracts its source axis
data = simulate_acquisition(medium, config)
W = make_encoder("rademacher", 2, 4, seed=7)
encoded = encode_tensor(W, data)
print(f"data {data.values.shape} -> encoded {encoded.values.shape}")

# superposition: one encoded solve equals the weighted per-source sum
w = W.weights[0]
one_solve = forward_solve(medium, config, w).traces
summed = sum(w[i] * forward_solve(medium, config, i).traces for i in range(4))
rel = np.abs(one_solve - summed).max() / np.abs(summed).max()
print(f"encoded solve vs weighted sum: max relative difference {rel:.2e}")

# unbiasedness: the mean encoded misfit converges to the full misfit
water = SoundSpeedMap.homogeneous(grid, 1500.0)
residuals = np.stack(
    [forward_solve(water, config, i).traces - data.values[i] for i in range(4)]
)
full = 0.5 * float((residuals**2).sum())
rng = np.random.default_rng(0)
r_flat = residuals.reshape(4, -1)
gram = r_flat @ r_flat.T
for n in (10, 100, 1000, 10000):
    draws = rng.integers(0, 2, size=(n, 4)) * 2.0 - 1.0
    j_mean = 0.5 * np.einsum("ni,ij,nj->n", draws, gram, draws).mean()
    print(f"mean encoded misfit over {n:>5} draws: {j_mean:.6e} (full {full:.6e})")
