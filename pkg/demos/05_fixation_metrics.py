# %% [markdown]
# Scoring maps against fixations
#
# NSS standardises the map and averages it at fixated pixels. LCC correlates
# the map with a Gaussian fixation density. AUC ranks fixated pixels against
# the rest, with ties counted half.

# %%
import numpy as np

from mdis.evaluation import FixationSet, auc, evaluate_batch, fixation_density, format_table, lcc, nss
from mdis.saliency import compute_saliency
from mdis.synthetic import popout_stimulus

print("NSS of [0, 1, 2, 3] at the 3:", nss(np.array([[0.0, 1, 2, 3]]), FixationSet("t", [[3, 0]])))
print("LCC of [1, 2, 3] and [1, 2, 4]:", lcc(np.array([1.0, 2, 3]), np.array([1.0, 2, 4])))

# %% simulated observers who mostly look at the textured square
rng = np.random.default_rng(1)
img, mask = popout_stimulus(256, 32, seed=1)
inside = np.argwhere(mask)[rng.integers(0, mask.sum(), 40)]
anywhere = rng.integers(0, 256, (10, 2))
yx = np.vstack([inside, anywhere])
fx = FixationSet("popout", yx[:, ::-1])

density = fixation_density(fx, sigma=8, dims=img.shape)
print("density mass", density.sum(), "for", len(fx), "fixations")

# %% one image, several maps
maps = {
    "THMT0": compute_saliency(img, "thmt"),
    "UHMT0": compute_saliency(img, "uhmt"),
    "CENTRE": None,
}
rows, cols = np.indices(img.shape)
maps["CENTRE"] = -np.hypot(rows - 128, cols - 128)  # a centre-bias baseline

reports = []
for label, m in maps.items():
    reports.append(evaluate_batch({"popout": m}, {"popout": fx}, label=label, sigma=8))
print(format_table(reports))

# %% the ROC curve behind the AUC
score, roc = auc(maps["THMT0"], fx)
print(f"AUC {score:.4f} from {len(roc)} ROC points")
