"""Model assembly, attention diagnostics, and the differentiation contract.

Builds a desk-scale lifter, runs a batch through it, inspects attention
row sums, counts parameters at paper scale, and runs the finite-difference
gradient check on a miniature instance.
"""

import numpy as np

from poselift import (ModelConfig, PoseLifter, SkeletonGraph, Tensor, grad_check,
                      human36m_skeleton)

skeleton = human36m_skeleton()
config = ModelConfig(frames=27, joints=17, channels_in=5, embed_dim=64, depth=2,
                     dropout=0.0)
model = PoseLifter(config, skeleton, seed=0)
print(f"desk-scale model: {model.parameter_count():,} parameters")

x = np.random.default_rng(0).normal(size=(27, 17, 5))
sink = []
y = model.forward(x, attn_sink=sink)
print(f"forward: {x.shape} -> {y.data.shape}")
rows = np.concatenate([w.sum(axis=-1).ravel() for w in sink])
print(f"{len(sink)} attention maps captured; row sums within "
      f"{np.abs(rows - 1).max():.2e} of 1")

# the published scale: embedding 384, depths 2 (main) and 3 (preliminary)
for label, channels_in, depth, reported in (("main", 5, 2, 11.41e6),
                                            ("preliminary", 2, 3, 17.06e6)):
    cfg = ModelConfig(frames=243, joints=17, channels_in=channels_in,
                      embed_dim=384, depth=depth)
    count = PoseLifter(cfg, skeleton, seed=0).parameter_count()
    print(f"{label:12s} at dim 384: {count:,} ({count / reported:.4f} of {reported / 1e6:.2f}M)")

# the differentiation contract on a miniature network
tiny_skeleton = SkeletonGraph(joint_count=3, edges=[(0, 1), (1, 2)])
tiny = PoseLifter(ModelConfig(frames=3, joints=3, channels_in=2, embed_dim=4, depth=1,
                              ste_heads=2, tte_heads=2, hga_heads=2, dropout=0.0),
                  tiny_skeleton, seed=1)
x_tiny = Tensor(np.random.default_rng(2).normal(size=(3, 3, 2)))
err = grad_check(lambda *ps: tiny.forward(x_tiny, training=True), tiny.parameters())
print(f"\nfinite-difference gradient check over {tiny.parameter_count()} parameters: "
      f"max relative error {err:.2e}")
