"""Training losses: weighted position, temporal consistency, velocity,
frequency, and their weighted combination.

All losses accept (T, N, 3) pose arrays or Tensors, with optional leading
batch axes reduced by arithmetic mean, and return scalar Tensors that
participate in differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .frequency import FreqLossConfig, freq_loss, freq_loss_spatial_axis
from .numerics import Tensor, as_tensor, l2norm_last


@dataclass
class LossWeights:
    """Coefficients of the composite loss and the per-joint weights."""

    lambda_t: float = 0.1
    lambda_m: float = 1.0
    lambda_f: float = 0.1
    joint_weights: np.ndarray | None = None

    def __post_init__(self):
        for name in ("lambda_t", "lambda_m", "lambda_f"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ConfigError(f"{name} must be finite and >= 0, got {v}")
        if self.joint_weights is not None:
            w = np.asarray(self.joint_weights, dtype=np.float64)
            if (w < 0).any() or not np.isfinite(w).all() or not (w > 0).any():
                raise ConfigError("joint weights must be finite, non-negative, not all zero")
            self.joint_weights = w


def grouped_joint_weights(groups, values=(1.0, 1.5, 2.5, 4.0)) -> np.ndarray:
    """Expand per-group weights to a per-joint vector.

    The (1.0, 1.5, 2.5, 4.0) default mirrors the common inner-to-outer
    weighting convention; it is a convenience preset, not a reported set.
    """
    if len(groups) != len(values):
        raise ConfigError(f"{len(groups)} groups vs {len(values)} weights")
    n = sum(len(g) for g in groups)
    w = np.zeros(n, dtype=np.float64)
    for idx_group, value in zip(groups, values):
        for j in idx_group:
            w[j] = value
    return w


def _prep(y_hat, y):
    y_hat, y = as_tensor(y_hat), as_tensor(y)
    if y_hat.data.shape != y.data.shape:
        raise ShapeError(f"prediction {y_hat.data.shape} vs reference {y.data.shape}")
    if y_hat.data.shape[-1] != 3 or y_hat.data.ndim < 3:
        raise ShapeError(f"expected (..., T, N, 3), got {y_hat.data.shape}")
    return y_hat, y


def _weights(joints: int, w) -> np.ndarray:
    if w is None:
        return np.ones(joints, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (joints,):
        raise ShapeError(f"joint weights {w.shape} for {joints} joints")
    return w


def wmpjpe(y_hat, y, joint_weights=None) -> Tensor:
    """Joint-weighted mean per-joint position error.

    (1 / (T N)) sum_n W_n sum_t ||y_hat_{t,n} - y_{t,n}||_2.
    """
    y_hat, y = _prep(y_hat, y)
    frames, joints = y_hat.data.shape[-3], y_hat.data.shape[-2]
    w_n = _weights(joints, joint_weights)
    dist = l2norm_last(y_hat - y)                    # (..., T, N)
    per_seq = (dist * Tensor(w_n)).sum(axis=(-2, -1)) * (1.0 / (frames * joints))
    return per_seq.mean()


def tc_loss(y_hat, joint_weights=None) -> Tensor:
    """Temporal-consistency loss on the prediction's own motion.

    (1 / ((T-1) N)) sum_n W_n sum_{t>=2} ||y_hat_t - y_hat_{t-1}||_2.
    No reference enters: the term penalizes frame-to-frame displacement.
    """
    y_hat = as_tensor(y_hat)
    if y_hat.data.ndim < 3 or y_hat.data.shape[-1] != 3:
        raise ShapeError(f"expected (..., T, N, 3), got {y_hat.data.shape}")
    frames, joints = y_hat.data.shape[-3], y_hat.data.shape[-2]
    if frames < 2:
        raise ConfigError("temporal-consistency loss needs at least 2 frames")
    w_n = _weights(joints, joint_weights)
    sel_now = (slice(None),) * (y_hat.data.ndim - 3) + (slice(1, None),)
    sel_prev = (slice(None),) * (y_hat.data.ndim - 3) + (slice(None, -1),)
    step = l2norm_last(y_hat[sel_now] - y_hat[sel_prev])     # (..., T-1, N)
    per_seq = (step * Tensor(w_n)).sum(axis=(-2, -1)) * (1.0 / ((frames - 1) * joints))
    return per_seq.mean()


def mpjve_loss(y_hat, y) -> Tensor:
    """Velocity-error loss between prediction and reference.

    (1 / (T N)) sum_n sum_{t>=2} ||(y_hat_t - y_hat_{t-1}) - (y_t - y_{t-1})||_2.
    The denominator is T*N even though the sum has T-1 terms; the metric
    counterpart in `metrics` divides by (T-1)*N instead.
    """
    y_hat, y = _prep(y_hat, y)
    frames, joints = y_hat.data.shape[-3], y_hat.data.shape[-2]
    if frames < 2:
        raise ConfigError("velocity loss needs at least 2 frames")
    sel_now = (slice(None),) * (y_hat.data.ndim - 3) + (slice(1, None),)
    sel_prev = (slice(None),) * (y_hat.data.ndim - 3) + (slice(None, -1),)
    v_hat = y_hat[sel_now] - y_hat[sel_prev]
    v_ref = y[sel_now] - y[sel_prev]
    err = l2norm_last(v_hat - v_ref)
    per_seq = err.sum(axis=(-2, -1)) * (1.0 / (frames * joints))
    return per_seq.mean()


@dataclass
class LossBreakdown:
    """Scalar Tensors for the composite loss and each raw term."""

    total: Tensor
    position: Tensor
    temporal: Tensor
    velocity: Tensor
    frequency: Tensor

    def values(self) -> dict:
        return {
            "total": self.total.item(),
            "position": self.position.item(),
            "temporal": self.temporal.item(),
            "velocity": self.velocity.item(),
            "frequency": self.frequency.item(),
        }


def total_loss(y_hat, y, weights: LossWeights, freq_cfg: FreqLossConfig | None = None) -> LossBreakdown:
    """Composite loss: position + lt*temporal + lm*velocity + lf*frequency.

    Every term is computed regardless of its weight so logging (and RNG
    consumption) is identical across weight settings.
    """
    w_n = weights.joint_weights
    pos = wmpjpe(y_hat, y, w_n)
    temp = tc_loss(y_hat, w_n)
    vel = mpjve_loss(y_hat, y)
    if freq_cfg is None:
        freq_cfg = FreqLossConfig(joint_weights=w_n)
    if freq_cfg.mode == "vector":
        freq = freq_loss(y_hat, y, freq_cfg)
    else:
        freq = freq_loss_spatial_axis(y_hat, y, freq_cfg.joint_weights)
    total = pos + weights.lambda_t * temp + weights.lambda_m * vel + weights.lambda_f * freq
    return LossBreakdown(total=total, position=pos, temporal=temp, velocity=vel, frequency=freq)
