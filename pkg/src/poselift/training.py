"""Training loop, optimizer, learning-rate schedule, and evaluation.

Training is deterministic for a fixed config: one ``numpy`` generator
seeded from the config drives shuffling, input jitter, noise injection,
and dropout in a fixed single-threaded order.  Targets are root-relative
3D in units of meters (mm / 1000); reported errors are scaled back to
millimeters.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import data as data_mod
from .errors import ConfigError, DataError, DivergenceError
from .frequency import FreqLossConfig
from .losses import LossWeights, total_loss
from .metrics import EvalReport, evaluate_sequences, root_relative
from .network import ModelConfig, PoseLifter, two_stage_forward
from .numerics import load_checkpoint, no_grad, precision, save_checkpoint
from .skeleton import SkeletonGraph, human36m_skeleton, load_skeleton

MM_PER_UNIT = 1000.0


@dataclass
class TrainConfig:
    """Everything one training stage needs; JSON-serializable."""

    seed: int = 0
    epochs: int = 100
    batch_size: int = 8
    learning_rate: float = 1e-4
    lr_decay: float = 0.99
    weight_decay: float = 0.0
    grad_clip: float | None = None
    val_fraction: float = 0.2
    eval_every: int = 1
    stage: str = "preliminary"
    data_dir: str = "data"
    out_dir: str = "runs/run0"
    model: ModelConfig = field(default_factory=lambda: ModelConfig(channels_in=2, depth=3))
    preliminary_model: ModelConfig | None = None
    preliminary_checkpoint: str | None = None
    noise: data_mod.NoiseConfig | None = None
    jitter_2d_std: float = 0.0
    root_center: bool = True
    precision: str = "float32"

    def __post_init__(self):
        if self.precision not in ("float32", "float64"):
            raise ConfigError(f"precision must be float32 or float64, got {self.precision!r}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning rate must be > 0, got {self.learning_rate}")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ConfigError(f"lr decay must lie in (0,1], got {self.lr_decay}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if self.stage not in ("preliminary", "main"):
            raise ConfigError(f"stage must be 'preliminary' or 'main', got {self.stage!r}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError(f"val fraction must lie in [0,1), got {self.val_fraction}")
        if self.stage == "preliminary" and self.model.channels_in != 2:
            raise ConfigError("preliminary stage requires a channels_in=2 model")
        if self.stage == "main":
            if self.model.channels_in != 5:
                raise ConfigError("main stage requires a channels_in=5 model")
            if self.preliminary_model is None:
                self.preliminary_model = ModelConfig(**{**asdict(self.model),
                                                        "channels_in": 2,
                                                        "depth": self.model.depth + 1})
            if self.preliminary_model.depth <= self.model.depth:
                raise ConfigError("the preliminary network must be deeper than the main one")

    def to_json(self) -> str:
        doc = asdict(self)
        if self.noise is not None:
            doc["noise"] = {"groups": [list(g) for g in self.noise.groups],
                            "stds": list(self.noise.stds), "seed": self.noise.seed}
        return json.dumps(doc, indent=2)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        doc = dict(doc)
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown train config fields: {sorted(unknown)}")
        if isinstance(doc.get("model"), dict):
            doc["model"] = ModelConfig.from_dict(doc["model"])
        if isinstance(doc.get("preliminary_model"), dict):
            doc["preliminary_model"] = ModelConfig.from_dict(doc["preliminary_model"])
        if isinstance(doc.get("noise"), dict):
            nd = doc["noise"]
            doc["noise"] = data_mod.NoiseConfig(
                groups=tuple(tuple(g) for g in nd["groups"]),
                stds=tuple(nd["stds"]), seed=nd.get("seed"))
        return cls(**doc)

    @classmethod
    def from_json_file(cls, path) -> "TrainConfig":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


# -- optimizer -----------------------------------------------------------------


@dataclass
class AdamState:
    """First/second moment estimates and the shared step counter."""

    m: list
    v: list
    t: int = 0


def init_adam_state(params) -> AdamState:
    return AdamState(m=[np.zeros_like(p.data) for p in params],
                     v=[np.zeros_like(p.data) for p in params])


def adamw_step(params, grads, state: AdamState, lr: float,
               betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.0) -> None:
    """One decoupled-weight-decay Adam update, in place.

    Weight decay multiplies the parameter directly (1 - lr*wd); the
    gradient only feeds the bias-corrected moment estimates.  Any
    non-finite gradient rejects the whole step.
    """
    beta1, beta2 = betas
    for p, g in zip(params, grads):
        if g is not None and not np.isfinite(g).all():
            name = getattr(p, "name", "<tensor>")
            raise DivergenceError(f"non-finite gradient for {name}; step rejected")
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p.data)
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / bc1
        v_hat = v / bc2
        p.data = p.data * (1.0 - lr * weight_decay) - lr * m_hat / (np.sqrt(v_hat) + eps)


class AdamW:
    """Stateful wrapper around ``adamw_step`` for a fixed parameter list."""

    def __init__(self, params, lr: float = 1e-4, betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.state = init_adam_state(self.params)

    def step(self, lr: float | None = None) -> None:
        grads = [p.grad for p in self.params]
        adamw_step(self.params, grads, self.state, self.lr if lr is None else lr,
                   self.betas, self.eps, self.weight_decay)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    """Exponential decay: initial rate times decay^epoch."""
    if epoch < 0:
        raise ConfigError(f"epoch must be >= 0, got {epoch}")
    return cfg.learning_rate * cfg.lr_decay ** epoch


def clip_gradients(params, max_norm: float) -> float:
    """Scale all gradients so their global norm is at most max_norm."""
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad ** 2).sum())
    norm = np.sqrt(total)
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


# -- dataset handling -----------------------------------------------------------


def load_dataset(data_dir) -> tuple:
    """Read every .pseq in the directory (sorted) plus its skeleton."""
    data_dir = Path(data_dir)
    paths = sorted(data_dir.glob("*.pseq"))
    if not paths:
        raise DataError(f"no .pseq sequences in {data_dir}")
    sequences = [data_mod.read_sequence(p) for p in paths]
    skel_path = data_dir / "skeleton.json"
    skeleton = load_skeleton(skel_path) if skel_path.exists() else human36m_skeleton()
    return sequences, [p.stem for p in paths], skeleton


def prepare_pairs(sequences, skeleton: SkeletonGraph, camera: data_mod.Camera | None = None,
                  root_center: bool = True) -> tuple:
    """Project each mm world sequence to 2D and normalize the 3D target.

    Returns (x2d, y) arrays of shape (S, T, N, 2) and (S, T, N, 3); the
    target is root-relative (optional) and scaled from mm to meters.
    """
    camera = camera or data_mod.Camera()
    x2d, y = [], []
    for seq in sequences:
        if seq.channels != 3:
            raise DataError(f"training sequences must be 3D, got {seq.channels} channels")
        x2d.append(data_mod.project_2d(seq, camera).values)
        world = seq.values
        target = root_relative(world, skeleton.root_index) if root_center else world
        y.append(target / MM_PER_UNIT)
    return np.stack(x2d), np.stack(y)


@dataclass
class TrainResult:
    best_checkpoint: str
    last_checkpoint: str | None
    log_path: str
    best_val_mpjpe_mm: float
    epoch_losses: list
    epoch_val_mpjpe: list


def _loss_weights(model_cfg: ModelConfig) -> LossWeights:
    w = None if model_cfg.joint_weights is None else np.asarray(model_cfg.joint_weights)
    return LossWeights(lambda_t=model_cfg.lambda_t, lambda_m=model_cfg.lambda_m,
                       lambda_f=model_cfg.lambda_f, joint_weights=w)


def _predict_eval(model: PoseLifter, preliminary: PoseLifter | None, x2d: np.ndarray) -> np.ndarray:
    """Clean eval-mode prediction for one (T, N, 2) input."""
    with no_grad():
        if preliminary is not None:
            out = two_stage_forward(x2d, preliminary, model)
        else:
            out = model.forward(x2d)
    return out.data


def train(cfg: TrainConfig) -> TrainResult:
    """Run one training stage; writes checkpoints and the loss CSV.

    The per-step CSV row is epoch, step, L_w, L_t, L_m, L_f, total.  The
    best-by-validation-MPJPE checkpoint is kept at best.ckpt; last.ckpt
    is written at the end of the final epoch.  A non-finite loss or
    gradient aborts with DivergenceError, retaining the checkpoints
    already on disk.
    """
    with precision(cfg.precision):
        return _train_inner(cfg)


def _train_inner(cfg: TrainConfig) -> TrainResult:
    rng = np.random.default_rng(cfg.seed)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    sequences, names, skeleton = load_dataset(cfg.data_dir)
    frames = sequences[0].frames
    if frames != cfg.model.frames:
        raise ConfigError(f"sequences have {frames} frames, model expects {cfg.model.frames}")
    x2d_all, y_all = prepare_pairs(sequences, skeleton, root_center=cfg.root_center)

    count = len(sequences)
    n_val = int(round(cfg.val_fraction * count))
    train_idx = np.arange(count - n_val)
    val_idx = np.arange(count - n_val, count) if n_val else np.arange(count)
    if len(train_idx) == 0:
        raise DataError("validation split leaves no training sequences")

    model = PoseLifter(cfg.model, skeleton, seed=cfg.seed)
    preliminary = None
    if cfg.stage == "main":
        if cfg.preliminary_checkpoint is None:
            raise ConfigError("stage 'main' requires a trained preliminary checkpoint")
        preliminary = PoseLifter(cfg.preliminary_model, skeleton, seed=cfg.seed)
        preliminary.load_state_dict(load_checkpoint(cfg.preliminary_checkpoint))

    weights = _loss_weights(cfg.model)
    freq_cfg = FreqLossConfig(joint_weights=weights.joint_weights)
    params = model.parameters()
    optimizer = AdamW(params, lr=cfg.learning_rate, weight_decay=cfg.weight_decay)

    # With no input jitter, the first-stage predictions never change.
    pre_cache = None
    if cfg.stage == "main" and cfg.jitter_2d_std == 0:
        with no_grad():
            pre_cache = preliminary.forward(x2d_all).data.astype(np.float64)

    log_path = out_dir / "loss_log.csv"
    best_path = out_dir / "best.ckpt"
    last_path = out_dir / "last.ckpt"
    best_val = np.inf
    epoch_losses, epoch_vals = [], []

    with open(log_path, "w", newline="", encoding="utf-8") as log_file:
        writer = csv.writer(log_file)
        writer.writerow(["epoch", "step", "L_w", "L_t", "L_m", "L_f", "total"])
        for epoch in range(cfg.epochs):
            lr = lr_schedule(epoch, cfg)
            order = rng.permutation(len(train_idx))
            step_losses = []
            for step_start in range(0, len(order), cfg.batch_size):
                batch = train_idx[order[step_start : step_start + cfg.batch_size]]
                xb = x2d_all[batch]
                yb = y_all[batch]
                if cfg.jitter_2d_std > 0:
                    xb = xb + rng.normal(0.0, cfg.jitter_2d_std, size=xb.shape)
                if cfg.stage == "main" and pre_cache is not None:
                    y_pre = pre_cache[batch]
                    if cfg.noise is not None:
                        y_pre = data_mod.inject_noise(y_pre, cfg.noise, rng)
                    out = model.forward(np.concatenate([xb, y_pre], axis=-1),
                                        training=True, rng=rng)
                elif cfg.stage == "main":
                    out = two_stage_forward(xb, preliminary, model, noise_cfg=cfg.noise,
                                            rng=rng, training=True)
                else:
                    out = model.forward(xb, training=True, rng=rng)
                breakdown = total_loss(out, yb, weights, freq_cfg)
                vals = breakdown.values()
                step = step_start // cfg.batch_size
                writer.writerow([epoch, step, vals["position"], vals["temporal"],
                                 vals["velocity"], vals["frequency"], vals["total"]])
                if not np.isfinite(vals["total"]):
                    log_file.flush()
                    raise DivergenceError(
                        f"loss diverged at epoch {epoch} step {step}; last good checkpoint retained")
                model.zero_grad()
                breakdown.total.backward()
                if cfg.grad_clip is not None:
                    clip_gradients(params, cfg.grad_clip)
                optimizer.step(lr)
                step_losses.append(vals["total"])
            epoch_losses.append(float(np.mean(step_losses)))

            if epoch % cfg.eval_every == 0 or epoch == cfg.epochs - 1:
                val_err = _validation_mpjpe(model, preliminary, x2d_all, y_all, val_idx,
                                            cfg.root_center, skeleton.root_index)
                epoch_vals.append((epoch, val_err))
                if val_err < best_val:
                    best_val = val_err
                    save_checkpoint(model.state_dict(), best_path)
        save_checkpoint(model.state_dict(), last_path)

    with open(out_dir / "config.json", "w", encoding="utf-8") as f:
        f.write(cfg.to_json() + "\n")
    return TrainResult(best_checkpoint=str(best_path), last_checkpoint=str(last_path),
                       log_path=str(log_path), best_val_mpjpe_mm=float(best_val),
                       epoch_losses=epoch_losses, epoch_val_mpjpe=epoch_vals)


def _validation_mpjpe(model, preliminary, x2d_all, y_all, indices,
                      root_center: bool, root_index: int) -> float:
    errors = []
    for i in indices:
        pred = _predict_eval(model, preliminary, x2d_all[i])
        ref = y_all[i]
        if root_center:
            pred = root_relative(pred, root_index)
            ref = root_relative(ref, root_index)
        errors.append(np.linalg.norm(pred - ref, axis=-1).mean() * MM_PER_UNIT)
    return float(np.mean(errors))


def evaluate(cfg: TrainConfig, checkpoint: str | None = None, data_dir: str | None = None,
             central_frame: bool = False, allow_scale: bool = True) -> EvalReport:
    """Evaluate a checkpoint on a dataset directory.

    For stage 'main' the preliminary checkpoint from the config feeds the
    clean (noise-free) two-stage pipeline.  ``central_frame`` restricts
    the metrics to each sequence's middle frame (velocity is then
    unavailable and reported as None).
    """
    sequences, names, skeleton = load_dataset(data_dir or cfg.data_dir)
    x2d_all, y_all = prepare_pairs(sequences, skeleton, root_center=cfg.root_center)
    with precision(cfg.precision):
        model = PoseLifter(cfg.model, skeleton, seed=cfg.seed)
        ckpt = checkpoint or str(Path(cfg.out_dir) / "best.ckpt")
        model.load_state_dict(load_checkpoint(ckpt))
        preliminary = None
        if cfg.stage == "main":
            if cfg.preliminary_checkpoint is None:
                raise ConfigError("stage 'main' requires a trained preliminary checkpoint")
            preliminary = PoseLifter(cfg.preliminary_model, skeleton, seed=cfg.seed)
            preliminary.load_state_dict(load_checkpoint(cfg.preliminary_checkpoint))

        predictions, references = [], []
        for i in range(len(sequences)):
            pred = _predict_eval(model, preliminary, x2d_all[i]).astype(np.float64)
            ref = y_all[i]
            if cfg.root_center:
                pred = root_relative(pred, skeleton.root_index)
                ref = root_relative(ref, skeleton.root_index)
            if central_frame:
                mid = pred.shape[0] // 2
                pred, ref = pred[mid : mid + 1], ref[mid : mid + 1]
            predictions.append(pred * MM_PER_UNIT)
            references.append(ref * MM_PER_UNIT)
    return evaluate_sequences(predictions, references, names, allow_scale=allow_scale)
