# %% [markdown]
# Coarse-to-fine MAP labels
#
# Root nodes take the most probable state. Every finer node then picks the
# label maximising the likelihood of its subtree times the transition
# probability from its parent's label.

# %%
import tempfile
from pathlib import Path

import numpy as np

from mdis.fusion import map_labels
from mdis.hmt import em_train, init_params, upward_downward
from mdis.mapio import write_label_pgms
from mdis.pyramid import dwt2d
from mdis.synthetic import popout_stimulus

img, mask = popout_stimulus(128, 32, texture="checker")
tree = dwt2d(img, scales=4)
params, _ = em_train(tree, init_params(tree))
labels = map_labels(upward_downward(tree, params), params)

for j, (lab, shape) in enumerate(zip(labels.labels, tree.shapes), start=1):
    grid = lab.reshape(shape)
    print(f"scale {j}: {grid.sum()} of {grid.size} nodes labelled centre")

# %% the finest label grid marks the textured square
print(labels.labels[-1].reshape(tree.shapes[-1])[24:40, 24:40])

# %% soft context replaces the parent's label with its posterior
soft = map_labels(upward_downward(tree, params), params, soft=True)
changed = sum(int(np.sum(a != b)) for a, b in zip(labels.labels, soft.labels))
print("labels that change under soft context:", changed)

# %% export for inspection
out = Path(tempfile.mkdtemp())
for p in write_label_pgms(labels, tree.shapes, out / "checker"):
    print("wrote", p)
