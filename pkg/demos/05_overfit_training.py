"""Short two-stage training run on a handful of synthetic clips.

Generates a small dataset, trains the 2D-only preliminary network, then
trains the 5-channel model on (2D keypoints ++ noise-disturbed provisional
3D).  This is a quick illustration, not the full acceptance run; expect a
few minutes of wall time and a loss that is still descending at the end.
"""

import tempfile
from pathlib import Path

from poselift import (ModelConfig, NoiseConfig, TrainConfig, generate_motion,
                      human36m_skeleton, save_skeleton, train, write_sequence)
from poselift.training import evaluate

workdir = Path(tempfile.mkdtemp(prefix="poselift_demo_"))
data_dir = workdir / "data"
data_dir.mkdir()
skeleton = human36m_skeleton()
for i in range(4):
    seq = generate_motion(skeleton, frames=27, fps=50.0, seed=100 + i)
    write_sequence(seq, data_dir / f"seq_{i:03d}.pseq")
save_skeleton(skeleton, data_dir / "skeleton.json")
print(f"dataset: 4 clips of 27 frames in {data_dir}")

prelim_model = ModelConfig(frames=27, joints=17, channels_in=2, embed_dim=64,
                           depth=3, dropout=0.0)
prelim_cfg = TrainConfig(seed=0, epochs=60, batch_size=8, learning_rate=5e-3,
                         lr_decay=0.997, val_fraction=0.0, eval_every=20,
                         stage="preliminary", data_dir=str(data_dir),
                         out_dir=str(workdir / "preliminary"), model=prelim_model)
prelim = train(prelim_cfg)
print(f"preliminary stage: train MPJPE {prelim.best_val_mpjpe_mm:.1f} mm "
      f"(loss {prelim.epoch_losses[0]:.3f} -> {prelim.epoch_losses[-1]:.3f})")

main_model = ModelConfig(frames=27, joints=17, channels_in=5, embed_dim=64,
                         depth=2, dropout=0.0)
main_cfg = TrainConfig(seed=0, epochs=60, batch_size=8, learning_rate=5e-3,
                       lr_decay=0.997, val_fraction=0.0, eval_every=20,
                       stage="main", data_dir=str(data_dir),
                       out_dir=str(workdir / "main"), model=main_model,
                       preliminary_model=prelim_model,
                       preliminary_checkpoint=prelim.best_checkpoint,
                       noise=NoiseConfig())
main = train(main_cfg)
print(f"main stage: train MPJPE {main.best_val_mpjpe_mm:.1f} mm")

report = evaluate(main_cfg, checkpoint=main.best_checkpoint)
print("\nfull evaluation of the two-stage pipeline (clean preliminary input):")
for key, value in report.to_dict().items():
    if key != "per_action":
        print(f"  {key}: {value}")
