"""Evaluation protocols: position error, Procrustes-aligned position error,
velocity error, and threshold-based keypoint accuracy.

All functions take plain (T, N, 3) numpy arrays in millimeters and return
floats; they are pure and never participate in differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError


def _check(y_hat, y):
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y_hat.shape != y.shape:
        raise ShapeError(f"prediction {y_hat.shape} vs reference {y.shape}")
    if y_hat.ndim != 3 or y_hat.shape[-1] != 3:
        raise ShapeError(f"expected (T, N, 3), got {y_hat.shape}")
    return y_hat, y


def mpjpe(y_hat, y) -> float:
    """Mean Euclidean distance per joint (protocol 1)."""
    y_hat, y = _check(y_hat, y)
    return float(np.linalg.norm(y_hat - y, axis=-1).mean())


def similarity_align(source: np.ndarray, target: np.ndarray, allow_scale: bool = True):
    """Best rotation (+ optional uniform scale) + translation of one point set
    onto another in the least-squares sense.

    Returns (aligned_source, degenerate) where `degenerate` reports a
    collapsed point set for which only the translation was applied.
    Reflections are corrected to proper rotations.
    """
    mu_s = source.mean(axis=0, keepdims=True)
    mu_t = target.mean(axis=0, keepdims=True)
    s0 = source - mu_s
    t0 = target - mu_t
    norm_s = np.sqrt((s0 ** 2).sum())
    norm_t = np.sqrt((t0 ** 2).sum())
    if norm_s < 1e-12 or norm_t < 1e-12:
        return source - mu_s + mu_t, True
    s0n = s0 / norm_s
    t0n = t0 / norm_t
    h = t0n.T @ s0n
    u, sing, vt = np.linalg.svd(h)
    v = vt.T
    sign = np.sign(np.linalg.det(v @ u.T))
    v[:, -1] *= sign
    sing = sing.copy()
    sing[-1] *= sign
    rot = v @ u.T
    if allow_scale:
        scale = sing.sum() * norm_t / norm_s
    else:
        scale = 1.0
    aligned = scale * (source - mu_s) @ rot + mu_t
    return aligned, False


def p_mpjpe(y_hat, y, allow_scale: bool = True, return_degenerate: bool = False):
    """Position error after per-frame Procrustes alignment (protocol 2).

    Each predicted frame is aligned to the reference frame by the
    closed-form similarity transform (rotation, translation, and uniform
    scale unless `allow_scale` is False) before measuring.
    """
    y_hat, y = _check(y_hat, y)
    errors = np.empty(y_hat.shape[0])
    degenerate = 0
    for t in range(y_hat.shape[0]):
        aligned, bad = similarity_align(y_hat[t], y[t], allow_scale=allow_scale)
        degenerate += bad
        errors[t] = np.linalg.norm(aligned - y[t], axis=-1).mean()
    value = float(errors.mean())
    if return_degenerate:
        return value, degenerate
    return value


def mpjve(y_hat, y) -> float:
    """Mean per-joint velocity error in mm/frame.

    Mean over joints and frames 2..T of the norm of the frame-difference
    mismatch; denominator (T-1)*N, unlike the printed training loss.
    """
    y_hat, y = _check(y_hat, y)
    if y_hat.shape[0] < 2:
        raise ConfigError("velocity error needs at least 2 frames")
    v_hat = np.diff(y_hat, axis=0)
    v_ref = np.diff(y, axis=0)
    return float(np.linalg.norm(v_hat - v_ref, axis=-1).mean())


def pck_auc(y_hat, y, threshold_mm: float = 150.0, auc_step: float = 5.0):
    """Percentage of joints within `threshold_mm`, and the mean of that
    percentage over thresholds 0..threshold_mm in steps of `auc_step`.

    A joint counts as correct when its error is <= the threshold, so a
    perfect prediction scores (100, 100).
    """
    y_hat, y = _check(y_hat, y)
    err = np.linalg.norm(y_hat - y, axis=-1)
    pck = 100.0 * (err <= threshold_mm).mean()
    grid = np.arange(0.0, threshold_mm + auc_step / 2, auc_step)
    auc = 100.0 * np.mean([(err <= thr).mean() for thr in grid])
    return float(pck), float(auc)


def root_relative(poses: np.ndarray, root_index: int = 0) -> np.ndarray:
    """Subtract the root joint's position from every joint, per frame."""
    poses = np.asarray(poses, dtype=np.float64)
    return poses - poses[..., root_index : root_index + 1, :]


@dataclass
class EvalReport:
    """Aggregated evaluation results, all non-negative, millimeter units."""

    mpjpe_mm: float
    p_mpjpe_mm: float
    mpjve_mm_per_frame: float | None
    pck_percent: float | None = None
    auc_percent: float | None = None
    per_action: dict = field(default_factory=dict)
    degenerate_frames: int = 0

    def to_dict(self) -> dict:
        return {
            "mpjpe_mm": self.mpjpe_mm,
            "p_mpjpe_mm": self.p_mpjpe_mm,
            "mpjve_mm_per_frame": self.mpjve_mm_per_frame,
            "pck_percent": self.pck_percent,
            "auc_percent": self.auc_percent,
            "per_action": self.per_action,
            "degenerate_frames": self.degenerate_frames,
        }


def evaluate_sequences(predictions, references, names=None, allow_scale: bool = True) -> EvalReport:
    """Metrics over matching lists of (T, N, 3) mm arrays.

    Sequence-level values are aggregated weighted by their frame counts;
    the per-action map keeps each named sequence's own numbers.
    """
    if len(predictions) != len(references):
        raise ShapeError(f"{len(predictions)} predictions vs {len(references)} references")
    if names is None:
        names = [f"seq{i}" for i in range(len(predictions))]
    per_action = {}
    pos_sum = pal_sum = frame_sum = 0.0
    vel_sum = vel_frames = 0.0
    correct = correct_grid = total_joints = 0.0
    degenerate = 0
    grid = np.arange(0.0, 150.0 + 2.5, 5.0)
    for name, y_hat, y in zip(names, predictions, references):
        y_hat, y = _check(y_hat, y)
        frames = y_hat.shape[0]
        e1 = mpjpe(y_hat, y)
        e2, bad = p_mpjpe(y_hat, y, allow_scale=allow_scale, return_degenerate=True)
        degenerate += bad
        entry = {"mpjpe_mm": e1, "p_mpjpe_mm": e2}
        pos_sum += e1 * frames
        pal_sum += e2 * frames
        frame_sum += frames
        if frames >= 2:
            ev = mpjve(y_hat, y)
            entry["mpjve_mm_per_frame"] = ev
            vel_sum += ev * (frames - 1)
            vel_frames += frames - 1
        err = np.linalg.norm(y_hat - y, axis=-1)
        correct += (err <= 150.0).sum()
        correct_grid += np.sum([(err <= thr).sum() for thr in grid])
        total_joints += err.size
        per_action[name] = entry
    return EvalReport(
        mpjpe_mm=pos_sum / frame_sum,
        p_mpjpe_mm=pal_sum / frame_sum,
        mpjve_mm_per_frame=(vel_sum / vel_frames) if vel_frames else None,
        pck_percent=100.0 * correct / total_joints,
        auc_percent=100.0 * correct_grid / (total_joints * len(grid)),
        per_action=per_action,
        degenerate_frames=degenerate,
    )
