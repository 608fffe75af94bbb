"""Skeleton graphs and the hybrid adjacency matrix.

Builds the 17-joint preset, computes hop distances, and shows how the
k-hop adjacencies, symmetric pairs, and hop weights combine into the
mixing matrix used by the graph attention module.
"""

import numpy as np

from poselift import (build_hybrid_adjacency, human36m_skeleton, khop_adjacency,
                      shortest_path_hops, symmetric_matrix)

skeleton = human36m_skeleton()
print(f"{skeleton.joint_count} joints, {len(skeleton.edges)} bones, "
      f"{len(skeleton.symmetric_pairs)} symmetric pairs")

hops = shortest_path_hops(skeleton)
print(f"\ngraph diameter: {hops.max()} hops")
print("hop distance from the hip to every joint:")
for name, d in zip(skeleton.joint_names, hops[skeleton.root_index]):
    print(f"  {name:15s} {d}")

# exactly-k-hop neighbourhoods are disjoint by construction
one_hop = khop_adjacency(hops, 1)
two_hop = khop_adjacency(hops, 2)
print(f"\n|1-hop| = {int(one_hop.sum())} entries, |2-hop| = {int(two_hop.sum())},"
      f" overlap = {int((one_hop * two_hop).sum())}")

# the hybrid matrix: hop weights 1.0, symmetric pairs at half the last weight
hybrid = build_hybrid_adjacency(skeleton, hop_count=2, hop_weights=[1.0, 1.0])
print(f"\nsymmetric-pair weight: {hybrid.sym_weight}")
wrists = (13, 16)
hips = (1, 4)
print(f"left/right wrist entry (6 hops apart, symmetric): {hybrid.skeletal[wrists]}")
print(f"left/right hip entry (2 hops apart AND symmetric): {hybrid.skeletal[hips]}")

np.set_printoptions(linewidth=200, precision=1)
print("\nfull hybrid matrix:")
print(hybrid.skeletal)
