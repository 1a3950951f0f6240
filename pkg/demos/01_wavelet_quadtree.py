# %% [markdown]
# Wavelet quad-trees
#
# Every image is first brought to a square, power-of-two luminance raster and
# then split by an orthonormal Haar transform. Each node of the resulting
# quad-tree holds the (HL, LH, HH) detail triple of one dyadic block.

# %%
import numpy as np

from mdis.pyramid import block_upsample, dwt2d, idwt2d, prepare_image, to_grayscale

rgb = np.zeros((300, 200, 3), dtype=np.uint8)
rgb[..., 0] = 255
print("pure red luminance:", to_grayscale(rgb)[0, 0])

img = prepare_image(rgb)
print("300x200 input prepared to", img.shape)

# %% the 2x2 block from the docs
tree = dwt2d(np.array([[4.0, 2.0], [2.0, 0.0]]), scales=1)
print("LL", tree.approx[0, 0], " HL, LH, HH", tree.details[0][0, 0])

# %% energy is preserved and the inverse is exact
rng = np.random.default_rng(0)
x = rng.random((64, 64))
tree = dwt2d(x, scales=5)
energy = sum((d ** 2).sum() for d in tree.details) + (tree.approx ** 2).sum()
print("relative energy error", abs(energy - (x ** 2).sum()) / (x ** 2).sum())
print("max reconstruction error", np.abs(idwt2d(tree) - x).max())

# %% layout: scale 1 is the coarsest
for j, (shape, obs) in enumerate(zip(tree.shapes, tree.observations), start=1):
    print(f"scale {j}: grid {shape}, {len(obs)} nodes")

# node 5 of scale 2 and its four children at scale 3
kids = tree.children(2, 5)
print("children of (2, 5):", kids, "-> parents", tree.parents[2][kids])

# %% per-node values go back to pixels by block replication
coarse = np.arange(4.0).reshape(2, 2)
print(block_upsample(coarse, (4, 4)))
