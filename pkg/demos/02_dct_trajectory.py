"""Trajectory spectra and the frequency-domain loss.

A jittery 1D trajectory is transformed with the orthonormal DCT,
reconstructed from its lowest coefficients, and the two loss variants
are compared on clean-vs-jittered pose sequences.
"""

import numpy as np

from poselift import (FreqLossConfig, dct_forward, dct_inverse, freq_loss,
                      freq_loss_spatial_axis, mpjve_loss)

rng = np.random.default_rng(0)
frames = 27
t = np.arange(frames) / 50.0

# a smooth swing plus high-frequency jitter
clean = 0.4 * np.sin(2 * np.pi * 1.2 * t)
jitter = 0.03 * rng.normal(size=frames)
noisy = clean + jitter

coeffs = dct_forward(noisy)
print("first 8 DCT coefficients:", np.round(coeffs[:8], 4))
print(f"energy in the lowest 5 of {frames}: "
      f"{100 * (coeffs[:5] ** 2).sum() / (coeffs ** 2).sum():.1f}%")

# low-pass reconstruction: keep 5 coefficients
kept = coeffs.copy()
kept[5:] = 0.0
smooth = dct_inverse(kept)
print(f"jitter RMS before {np.sqrt(((noisy - clean) ** 2).mean()):.4f} "
      f"after low-pass {np.sqrt(((smooth - clean) ** 2).mean()):.4f}")

# losses on full pose sequences: the reference moves smoothly, the
# prediction carries jitter on every coordinate
reference = np.zeros((frames, 17, 3))
reference[..., 0] = clean[:, None]
prediction = reference + 0.03 * rng.normal(size=reference.shape)

print(f"\nper-frequency-vector loss : {freq_loss(prediction, reference).item():.4f}")
print(f"per-spatial-axis loss     : {freq_loss_spatial_axis(prediction, reference).item():.4f}")
print(f"velocity loss             : {mpjve_loss(prediction, reference).item():.4f}")

for cfg in (FreqLossConfig(truncation="top", keep=5),
            FreqLossConfig(truncation="low_weighted", keep=5, down_weight=0.25)):
    value = freq_loss(prediction, reference, cfg).item()
    print(f"truncation {cfg.truncation:13s} (keep {cfg.keep}): {value:.4f}")
