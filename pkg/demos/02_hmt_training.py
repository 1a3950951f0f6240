# %% [markdown]
# Hidden Markov trees: likelihoods and training
#
# A two-state tree with per-scale tied parameters. State 0 is the
# small-variance (surround) component, state 1 the large-variance (centre)
# component. Data are drawn from a known model so we can see EM recover it.

# %%
import numpy as np

from mdis import hmt
from mdis.hmt import HmtParams, em_train, em_train_vector, init_params, upward_downward

true = HmtParams(
    "thmt",
    root_prior=[0.6, 0.4],
    transitions=[[[0.9, 0.1], [0.2, 0.8]], [[0.85, 0.15], [0.1, 0.9]]],
    emission=[
        [[0.3, 0.3, 0.1], [12.0, 10.0, 6.0]],
        [[0.1, 0.1, 0.05], [4.0, 3.0, 2.0]],
        [[0.02, 0.02, 0.01], [1.0, 1.0, 0.5]],
    ],
)
tree, states = hmt.sample_quadtree(true, (32, 32), rng=0)
print("sampled", [len(o) for o in tree.observations], "nodes per scale")

# %% EM from the moment initialisation
init = init_params(tree)
fit, trace = em_train(tree, init, max_iter=200, rel_tol=1e-8)
print(f"{len(trace) - 1} iterations, log-likelihood {trace[0]:.1f} -> {trace[-1]:.1f}")
print("monotone:", bool(np.all(np.diff(trace) >= -1e-9)))
print("variance ratio fitted/true:\n", np.round(fit.emission / true.emission, 3))
print("transitions:\n", np.round(fit.transitions, 3))

# %% posteriors: how often the MAP state matches the hidden one
lik = upward_downward(tree, fit)
for j, (post, s) in enumerate(zip(lik.posterior, states), start=1):
    acc = np.mean(post.argmax(axis=1) == s.ravel())
    print(f"scale {j}: state accuracy {acc:.3f}")

# %% the vector flavour couples the three bands through a covariance
vinit = init_params(tree, "vhmt")
vfit, vtrace = em_train_vector(tree, vinit)
print(f"vector model: {len(vtrace) - 1} iterations, log-likelihood {vtrace[-1]:.1f}")

# %% universal parameters ship with the package and need no training
u = hmt.universal_params()
print("universal model:", u.levels, "scales, root prior", np.round(u.root_prior, 3))
