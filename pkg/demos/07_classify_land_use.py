"""Seven-day FCM sequences into the 3-D convolutional land-use classifier:
window assembly, splitting, training, and per-class metrics.

Run:  python3 demos/07_classify_land_use.py   (about a minute)
"""

import datetime as _dt

import numpy as np

from gastkit import classifier as clf
from gastkit.soundscape import LandUseClass, TimeCode

# Fake FCM images for 3 classes x 2 devices x 16 consecutive days: each
# class lights a different block of the matrix, as distinct tone
# signatures would.
rng = np.random.default_rng(0)
entries = []
start = _dt.date(2019, 5, 6)
for cid in (1, 2, 3):
    for dev in range(2):
        for day in range(16):
            d = start + _dt.timedelta(days=day)
            img = rng.uniform(0, 0.05, (16, 16))
            r = (cid - 1) * 4
            img[r:r + 4, r:r + 4] += 0.9
            entries.append((f"dev_{cid}{dev}", TimeCode(d.year, d.month, d.day),
                            LandUseClass(cid), img))

sequences = clf.assemble_sequences(entries)
print(f"{len(entries)} device-days -> {len(sequences)} seven-day sequences")

train, val, ev = clf.split_dataset(sequences, clf.SplitSpec(seed=0))
print(f"split: {len(train)} train / {len(val)} val / {len(ev)} eval")

scale = clf.ClassifierScale(16, (6, 3, 3), (1, 1, 1), channels=4)
model, history = clf.train_classifier((train, val, ev), epochs=20, lr=2e-3,
                                      seed=0, scale=scale, classes=3)
print(f"loss {history[0][1]:.3f} -> {history[-1][1]:.3f}, "
      f"val acc {history[-1][3]:.2f}")

metrics = clf.evaluate(model, ev, classes=3)
print("\nconfusion (rows true, cols predicted):")
print(metrics.confusion)
print("\n" + clf.render_metrics_table({"same_device": metrics}))

# The full-scale geometry also holds together: a (1, 7, 256, 256) sequence
# maps to a (32, 2, 63, 63) feature volume, and the nominal depth-6 pooling
# window is clamped to the available depth of 2.
from gastkit.tensor import Tensor
paper = clf.build_classifier(side=256, classes=9, seed=0)
h = paper.conv(Tensor(np.zeros((1, 1, 7, 256, 256))))
print("full-scale conv output:", h.shape, " pool window:", paper.pool_window)
