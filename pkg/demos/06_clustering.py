"""Latent-space clustering: k-means++, inertia elbow, silhouette scores,
and automatic cluster-count selection.

Run:  python3 demos/06_clustering.py
"""

import numpy as np

from gastkit.cluster import elbow_select, kmeans, select_k, silhouette_score

# Three planted Gaussian blobs in 16 dimensions.
rng = np.random.default_rng(1)
centers = rng.standard_normal((3, 16)) * 4.0
points = np.concatenate([
    centers[i] + 0.1 * rng.standard_normal((40, 16)) for i in range(3)
])
labels = np.repeat(np.arange(3), 40)

print("inertia by k:")
for k in range(1, 7):
    res = kmeans(points, k, seed=0)
    print(f"  k={k}: inertia={res.inertia:9.2f}  silhouette={res.silhouette:.3f}")

print("\nelbow suggests     k =", elbow_select(points, range(1, 7), seed=0))
print("select_k decides   k =", select_k(points, range(2, 7), seed=0))

res = kmeans(points, 3, seed=0)
hits = sum(np.bincount(labels[res.assignments == c]).max()
           for c in np.unique(res.assignments))
print("purity against planted labels:", hits / labels.size)
print("silhouette of the final clustering:",
      round(silhouette_score(points, res.assignments), 3))
