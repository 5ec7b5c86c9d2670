"""Generate synthetic datasets and corrupt their labels.

Walks through the data pipeline: Gaussian blobs and concentric rings,
stratified splitting, symmetric label noise driven by a transition matrix,
feature-dependent noise that targets boundary points, and recovering the
transition matrix from (true, observed) pairs.
"""

import numpy as np

from noisylab.data import gen_blobs, gen_rings, load_csv, save_csv, split
from noisylab.noise import (centroid_margins, estimate_transition,
                            feature_dependent_inject, inject,
                            symmetric_transition)
from noisylab.numerics import Rng

# -- two dataset families ----------------------------------------------------
blobs = gen_blobs(K=3, n_per_class=500, d=2, separation=8.0, seed=1)
rings = gen_rings(K=2, n_per_class=500, noise_std=0.1, seed=2)
print(f"blobs: {blobs.n} points, {blobs.num_classes} classes, dim {blobs.dim}")
print(f"rings: {rings.n} points, {rings.num_classes} classes")

train_ds, test_ds = split(blobs, test_fraction=0.25, seed=3)
print(f"split: {train_ds.n} train / {test_ds.n} test (stratified)")

# -- symmetric noise: each label flips with probability rho ------------------
T = symmetric_transition(3, rho=0.3)
print("\nsymmetric transition matrix (rho=0.3):")
print(np.round(T.t, 3))

noisy = inject(train_ds, T, Rng(4))
flip_rate = float(np.mean(noisy.labels != noisy.true_labels))
print(f"observed flip rate: {flip_rate:.3f} (expected ~0.30)")

# Training code gets a view with the hidden truth stripped out.
view = noisy.training_view()
print(f"training view hides truth: true_labels is {view.true_labels}")

# -- feature-dependent noise: boundary points flip more often ----------------
fd_noisy = feature_dependent_inject(train_ds, rho_max=0.4, beta=0.1,
                                    rng=Rng(5))
margins, _ = centroid_margins(train_ds)
flipped = fd_noisy.labels != fd_noisy.true_labels
print(f"\nfeature-dependent noise: flip rate {flipped.mean():.3f}")
print(f"mean margin of flipped points:   {margins[flipped].mean():.2f}")
print(f"mean margin of untouched points: {margins[~flipped].mean():.2f}")
print("(flips concentrate where the margin is small)")

# -- estimating the transition matrix from labeled pairs ---------------------
pairs = list(zip(noisy.true_labels, noisy.labels))
T_hat = estimate_transition(pairs, 3)
print("\nestimated transition matrix from (true, observed) pairs:")
print(np.round(T_hat.t, 3))
print(f"max entry error vs truth: {np.abs(T_hat.t - T.t).max():.3f}")

# -- CSV round trip ----------------------------------------------------------
save_csv(noisy, "/tmp/noisylab_demo_noisy.csv")
back = load_csv("/tmp/noisylab_demo_noisy.csv")
assert np.array_equal(back.labels, noisy.labels)
assert np.allclose(back.features, noisy.features)
print("\nCSV round trip: features and labels identical")
