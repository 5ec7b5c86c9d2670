"""Training-procedure remedies: mixup, co-teaching, disagreement-only
updates, dual-model iterative label update with a soft-label store, and
iterative label cleaning driven by a meta-classifier over prediction
features.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import LabeledDataset
from .losses import LOG_CLAMP
from .model import (backward_batch, ensemble_disagreement,
                    forward_batch, init, predict, predict_probs, train)
from .noise import class_centroids
from .numerics import Rng, sample_beta, softmax


# --- soft-label store -------------------------------------------------------

@dataclass
class LabelEntry:
    hard: int | None            # exactly one of hard/soft is set
    soft: np.ndarray | None
    provenance: dict            # {"kind": "original"} or
                                # {"kind": "relabeled", "epoch": e, "source": s}

    def as_probs(self, K):
        if self.soft is not None:
            return self.soft
        q = np.zeros(K)
        q[self.hard] = 1.0
        return q


class SoftLabelStore:
    """Per-sample label state (hard index or soft distribution) with
    provenance; provenance epochs only move forward."""

    def __init__(self, labels, K):
        self.K = K
        self.entries = [LabelEntry(int(y), None, {"kind": "original"})
                        for y in labels]

    def __len__(self):
        return len(self.entries)

    def relabel_hard(self, i, label, epoch, source):
        self._check_epoch(i, epoch)
        self.entries[i] = LabelEntry(int(label), None,
                                     {"kind": "relabeled", "epoch": epoch,
                                      "source": source})

    def relabel_soft(self, i, probs, epoch, source):
        self._check_epoch(i, epoch)
        self.entries[i] = LabelEntry(None, np.asarray(probs, dtype=np.float64),
                                     {"kind": "relabeled", "epoch": epoch,
                                      "source": source})

    def _check_epoch(self, i, epoch):
        prov = self.entries[i].provenance
        if prov["kind"] == "relabeled" and epoch < prov["epoch"]:
            raise ValueError("provenance epoch cannot move backwards")

    def hard_labels(self):
        """Argmax view (soft entries collapse to their mode)."""
        return np.array([e.hard if e.hard is not None
                         else int(e.soft.argmax()) for e in self.entries],
                        dtype=np.int64)

    def match_fraction(self, truth):
        return float(np.mean(self.hard_labels() == np.asarray(truth)))

    def to_json(self):
        out = []
        for e in self.entries:
            rec = {"provenance": e.provenance}
            if e.hard is not None:
                rec["hard"] = e.hard
            else:
                rec["soft"] = [format(v, ".17g") for v in e.soft]
            out.append(rec)
        return out


def _target_loss(probs, entry_probs):
    """CE for hard one-hot targets, KL(q||p) for soft targets; the two agree
    up to the constant -H(q)."""
    pc = np.maximum(probs, LOG_CLAMP)
    nz = entry_probs > 0
    return float(np.sum(entry_probs[nz]
                        * (np.log(entry_probs[nz]) - np.log(pc[nz]))))


# --- mixup ------------------------------------------------------------------

def mixup(X, Y_onehot, alpha, rng):
    """Convex combinations of the batch against a seeded shuffle of itself;
    one Beta(alpha, alpha) coefficient per pair."""
    if alpha <= 0:
        raise ValueError("mixup: alpha must be positive")
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y_onehot, dtype=np.float64)
    perm = rng.permutation(len(X))
    lam = np.array([sample_beta(alpha, rng) for _ in range(len(X))])
    X_mix = lam[:, None] * X + (1.0 - lam[:, None]) * X[perm]
    Y_mix = lam[:, None] * Y + (1.0 - lam[:, None]) * Y[perm]
    return X_mix, Y_mix


def train_mixup(ds, config, test_ds=None, alpha=0.2):
    """SGD on mixup batches; soft targets trained with CE (grad p - y)."""
    rng = Rng(config.seed)
    params = init(config.arch, ds.dim, ds.num_classes, config.seed,
                  config.hidden, config.capacity_scale)
    Y = np.eye(ds.num_classes)[ds.labels]
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(ds.n)
        epoch_losses = []
        for start in range(0, ds.n, config.batch_size):
            idx = order[start:start + config.batch_size]
            X_mix, Y_mix = mixup(ds.features[idx], Y[idx], alpha, rng)
            logits, cache = forward_batch(params, X_mix)
            probs = softmax(logits)
            epoch_losses.extend(
                -np.sum(Y_mix * np.log(np.maximum(probs, LOG_CLAMP)), axis=1))
            G = probs - Y_mix
            grads = backward_batch(params, G, cache)
            scale = config.learning_rate / len(idx)
            for name in params.arrays:
                params.arrays[name] -= scale * grads[name]
        row = {"epoch": epoch, "train_loss": float(np.mean(epoch_losses))}
        if test_ds is not None:
            truth = (test_ds.true_labels if test_ds.true_labels is not None
                     else test_ds.labels)
            row["test_accuracy"] = float(
                np.mean(predict(params, test_ds.features) == truth))
        history.append(row)
    return params, history


# --- peer-model steps -------------------------------------------------------

def _sgd_step_on(params, X, y, lr):
    logits, cache = forward_batch(params, X)
    probs = softmax(logits)
    G = probs - np.eye(params.K)[y]
    grads = backward_batch(params, G, cache)
    scale = lr / max(len(X), 1)
    for name in params.arrays:
        params.arrays[name] -= scale * grads[name]
    losses = -np.log(np.maximum(probs[np.arange(len(y)), y], LOG_CLAMP))
    return losses


def small_loss_selection(probs, y, keep_fraction):
    """Indices of the keep_fraction smallest-CE samples (predictions plus
    labels only; no other state)."""
    losses = -np.log(np.maximum(probs[np.arange(len(y)), y], LOG_CLAMP))
    n_keep = max(1, int(round(keep_fraction * len(y))))
    order = np.argsort(losses, kind="stable")
    return np.sort(order[:n_keep])


def co_teach_step(model_a, model_b, X, y, keep_fraction, lr):
    """Each model picks its smallest-loss samples; the peer updates on that
    selection. Both selections happen before either update."""
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError("keep_fraction must be in (0,1]")
    sel_a = small_loss_selection(predict_probs(model_a, X), y, keep_fraction)
    sel_b = small_loss_selection(predict_probs(model_b, X), y, keep_fraction)
    _sgd_step_on(model_b, X[sel_a], y[sel_a], lr)   # A teaches B
    _sgd_step_on(model_a, X[sel_b], y[sel_b], lr)   # B teaches A
    return sel_a, sel_b


def disagreement_mask(preds_a, preds_b):
    """Update mask from the two models' predictions only."""
    return np.asarray(preds_a) != np.asarray(preds_b)


def disagreement_step(model_a, model_b, X, y, lr):
    """Both models update only where their argmax predictions differ
    (computed before any update)."""
    mask = disagreement_mask(predict(model_a, X), predict(model_b, X))
    idx = np.flatnonzero(mask)
    if idx.size:
        _sgd_step_on(model_a, X[idx], y[idx], lr)
        _sgd_step_on(model_b, X[idx], y[idx], lr)
    return idx


def co_teaching_keep_schedule(epoch, noise_rate, warm_epochs=5,
                              decay_epochs=10):
    """Keep everything for the warmup epochs, then decay linearly to
    1 - noise_rate over decay_epochs."""
    if epoch < warm_epochs:
        return 1.0
    frac = min(1.0, (epoch - warm_epochs + 1) / decay_epochs)
    return 1.0 - frac * noise_rate


def train_co_teaching(ds, config, test_ds=None, noise_rate=0.2,
                      disagreement_only=False):
    """Two peer models trained with co-teaching (or disagreement-only
    updates when disagreement_only is set)."""
    rng = Rng(config.seed)
    seed_a, seed_b = (int(r.integers(0, 2**31)) for r in rng.split(2))
    model_a = init(config.arch, ds.dim, ds.num_classes, seed_a,
                   config.hidden, config.capacity_scale)
    model_b = init(config.arch, ds.dim, ds.num_classes, seed_b,
                   config.hidden, config.capacity_scale)
    history = []
    for epoch in range(config.epochs):
        keep = co_teaching_keep_schedule(epoch, noise_rate)
        order = rng.permutation(ds.n)
        for start in range(0, ds.n, config.batch_size):
            idx = order[start:start + config.batch_size]
            X, y = ds.features[idx], ds.labels[idx]
            if disagreement_only:
                disagreement_step(model_a, model_b, X, y,
                                  config.learning_rate)
            else:
                co_teach_step(model_a, model_b, X, y, keep,
                              config.learning_rate)
        row = {"epoch": epoch, "keep_fraction": keep}
        if test_ds is not None:
            truth = (test_ds.true_labels if test_ds.true_labels is not None
                     else test_ds.labels)
            row["test_accuracy"] = float(
                np.mean(predict(model_a, test_ds.features) == truth))
        history.append(row)
    return model_a, model_b, history


# --- dual models with iterative label update --------------------------------

def _train_epoch_against_store(params, ds, store, peer_pred_probs, rng, lr,
                               batch_size):
    """One epoch where each sample's target is whichever of (stored label,
    peer's predicted hard label) currently yields the lower loss."""
    order = rng.permutation(ds.n)
    for start in range(0, ds.n, batch_size):
        idx = order[start:start + batch_size]
        logits, cache = forward_batch(params, ds.features[idx])
        probs = softmax(logits)
        targets = np.zeros_like(probs)
        for r, i in enumerate(idx):
            stored = store.entries[i].as_probs(store.K)
            peer = np.zeros(store.K)
            peer[int(peer_pred_probs[i].argmax())] = 1.0
            l_stored = _target_loss(probs[r], stored)
            l_peer = _target_loss(probs[r], peer)
            targets[r] = stored if l_stored <= l_peer else peer
        G = probs - targets
        grads = backward_batch(params, G, cache)
        scale = lr / len(idx)
        for name in params.arrays:
            params.arrays[name] -= scale * grads[name]


def dual_relabel_epoch(model_small, model_large, ds, store, rng, lr,
                       batch_size, epoch):
    """One round of dual-model training plus the end-of-epoch relabel rule:
    a sample's stored label is replaced by a model's hard prediction when
    exactly one model's prediction beats the stored label's loss, and by
    the average of the two predicted distributions (soft) when both do."""
    preds_small = predict_probs(model_small, ds.features)
    preds_large = predict_probs(model_large, ds.features)
    rng_a, rng_b = rng.split(2)
    _train_epoch_against_store(model_small, ds, store, preds_large, rng_a,
                               lr, batch_size)
    _train_epoch_against_store(model_large, ds, store, preds_small, rng_b,
                               lr, batch_size)
    preds_small = predict_probs(model_small, ds.features)
    preds_large = predict_probs(model_large, ds.features)
    for i in range(ds.n):
        stored = store.entries[i].as_probs(store.K)
        wins = []
        for name, probs in (("small", preds_small[i]),
                            ("large", preds_large[i])):
            own = np.zeros(store.K)
            own[int(probs.argmax())] = 1.0
            if _target_loss(probs, own) < _target_loss(probs, stored):
                wins.append((name, probs))
        if len(wins) == 1:
            name, probs = wins[0]
            store.relabel_hard(i, int(probs.argmax()), epoch, name)
        elif len(wins) == 2:
            avg = 0.5 * (preds_small[i] + preds_large[i])
            store.relabel_soft(i, avg, epoch, "both")
    return store


def train_dual_relabel(ds, config, test_ds=None, warmup_epochs=5):
    """Full dual-model procedure: capacity-0.8 and capacity-1.25 models
    warm up on the noisy labels, then alternate training against the store
    with end-of-epoch relabeling."""
    rng = Rng(config.seed)
    seed_a, seed_b = (int(r.integers(0, 2**31)) for r in rng.split(2))
    model_small = init("mlp", ds.dim, ds.num_classes, seed_a,
                       config.hidden, 0.80)
    model_large = init("mlp", ds.dim, ds.num_classes, seed_b,
                       config.hidden, 1.25)
    store = SoftLabelStore(ds.labels, ds.num_classes)
    warm_cfg = replace(config, epochs=warmup_epochs, arch="mlp")
    model_small, _ = train(ds, replace(warm_cfg, seed=seed_a),
                           params=model_small)
    model_large, _ = train(ds, replace(warm_cfg, seed=seed_b),
                           params=model_large)
    history = []
    for epoch in range(config.epochs):
        dual_relabel_epoch(model_small, model_large, ds, store, rng,
                           config.learning_rate, config.batch_size, epoch)
        row = {"epoch": epoch}
        if ds.true_labels is not None:
            row["store_match_truth"] = store.match_fraction(ds.true_labels)
        if test_ds is not None:
            truth = (test_ds.true_labels if test_ds.true_labels is not None
                     else test_ds.labels)
            row["test_accuracy"] = float(
                np.mean(predict(model_small, test_ds.features) == truth))
        history.append(row)
    return model_small, model_large, store, history


# --- iterative label cleaning ----------------------------------------------

META_FEATURE_NAMES = ("loss", "max_prob", "margin", "disagreement",
                      "centroid_distance")


def cleaning_meta_features(models, ds, labels):
    """Five per-sample features for the cleaning meta-classifier: CE loss of
    the observed label, max probability, top1-top2 margin, seed-ensemble
    disagreement, and distance to the observed-class centroid."""
    probs = predict_probs(models[0], ds.features)
    n = ds.n
    loss = -np.log(np.maximum(probs[np.arange(n), labels], LOG_CLAMP))
    sorted_p = np.sort(probs, axis=1)
    max_prob = sorted_p[:, -1]
    margin = sorted_p[:, -1] - sorted_p[:, -2]
    disagree = np.array([ensemble_disagreement(models, ds.features[i])
                         for i in range(n)]) if len(models) > 1 else np.zeros(n)
    cents = class_centroids(ds.features, labels, ds.num_classes)
    dist = np.linalg.norm(ds.features - cents[labels], axis=1)
    return np.column_stack([loss, max_prob, margin, disagree, dist])


def iterative_clean(ds_noisy, ds_clean_small, config, rounds=3,
                    threshold=0.5, ensemble_size=3):
    """Iterative label cleaning: train on current labels, score every sample
    with five meta-features, fit a logistic meta-classifier on the small
    clean set (target: observed label differs from truth), then relabel the
    noisy samples it flags with the base model's prediction.

    Returns (SoftLabelStore, flag indicator array, meta-classifier params,
    per-round history).
    """
    if ds_clean_small is None or ds_clean_small.true_labels is None:
        raise ValueError("iterative_clean: clean set with true labels required")
    rng = Rng(config.seed)
    store = SoftLabelStore(ds_noisy.labels, ds_noisy.num_classes)
    flags = np.zeros(ds_noisy.n, dtype=bool)
    meta_params = None
    history = []
    for rnd in range(rounds):
        labels = store.hard_labels()
        current = replace(ds_noisy.training_view(), labels=labels)
        seeds = [int(r.integers(0, 2**31)) for r in rng.split(ensemble_size)]
        models = [train(current, replace(config, seed=s))[0] for s in seeds]
        feats_clean = cleaning_meta_features(models, ds_clean_small,
                                             ds_clean_small.labels)
        target = (ds_clean_small.labels
                  != ds_clean_small.true_labels).astype(np.int64)
        mu, sd = feats_clean.mean(axis=0), feats_clean.std(axis=0) + 1e-9
        meta_ds = LabeledDataset((feats_clean - mu) / sd, target, 2)
        meta_cfg = replace(config, arch="linear", epochs=60,
                           seed=config.seed + 1000 + rnd)
        meta_params, _ = train(meta_ds, meta_cfg)
        feats_noisy = (cleaning_meta_features(models, ds_noisy, labels)
                       - mu) / sd
        p_flip = predict_probs(meta_params, feats_noisy)[:, 1]
        base_pred = predict(models[0], ds_noisy.features)
        round_flags = p_flip > threshold
        for i in np.flatnonzero(round_flags):
            if base_pred[i] != labels[i]:
                store.relabel_hard(i, int(base_pred[i]), rnd, "meta_clean")
        flags |= round_flags
        history.append({"round": rnd,
                        "flagged": int(round_flags.sum()),
                        "relabeled": int(np.sum(round_flags
                                                & (base_pred != labels)))})
    return store, flags, meta_params, history
