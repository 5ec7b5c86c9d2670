"""Multi-annotator label handling: majority vote, STAPLE EM fusion,
minimum-loss label selection, and joint annotator-confusion estimation with
a trace penalty.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import grad_probs_to_logits
from .model import Rng, backward_batch, forward_batch, init
from .noise import TransitionMatrix
from .numerics import softmax

M_STEP_SMOOTHING = 1e-9


@dataclass(frozen=True)
class AnnotatorModel:
    """Per-annotator row-stochastic confusion matrices and a class prior."""

    confusions: tuple
    prior: np.ndarray

    def to_json(self):
        return {"prior": self.prior.tolist(),
                "confusions": [T.t.tolist() for T in self.confusions]}

    @classmethod
    def from_json(cls, obj):
        return cls(tuple(TransitionMatrix(np.asarray(t))
                         for t in obj["confusions"]),
                   np.asarray(obj["prior"], dtype=np.float64))


def majority_vote(labels):
    """Most frequent label; ties go to the lowest class index."""
    labels = np.asarray(labels)
    if labels.size < 1:
        raise ValueError("majority_vote: need at least one label")
    return int(np.bincount(labels).argmax())


def _staple_loglik(L, prior, thetas):
    n, A = L.shape
    like = np.tile(prior, (n, 1))
    for a in range(A):
        like *= thetas[a][:, L[:, a]].T
    return float(np.sum(np.log(np.maximum(like.sum(axis=1), 1e-300)))), like


def staple(annotator_labels, K, max_iters=100, tol=1e-6):
    """Discrete multi-class STAPLE (Warfield-style EM).

    E-step: posterior(i,c) proportional to pi_c * prod_a theta_a[c, L_ia].
    M-step: count-weighted re-estimates with 1e-9 additive smoothing.
    Returns (posteriors N x K, AnnotatorModel, fused labels, log-likelihood
    trace). Initialization is diagonal-dominant (0.8) so EM selects the
    annotators-are-mostly-right mode.
    """
    L = np.asarray(annotator_labels, dtype=np.int64)
    if L.ndim != 2 or L.shape[0] < 1 or L.shape[1] < 2:
        raise ValueError("staple: need N x A labels with A >= 2")
    n, A = L.shape
    prior = np.full(K, 1.0 / K)
    off = 0.2 / (K - 1) if K > 1 else 0.0
    thetas = [np.full((K, K), off) + (0.8 - off) * np.eye(K)
              for _ in range(A)]
    loglik_trace = []
    for _ in range(max_iters):
        ll, like = _staple_loglik(L, prior, thetas)
        loglik_trace.append(ll)
        post = like / like.sum(axis=1, keepdims=True)
        max_change = 0.0
        new_prior = post.mean(axis=0)
        max_change = max(max_change, float(np.abs(new_prior - prior).max()))
        prior = new_prior
        for a in range(A):
            counts = np.zeros((K, K))
            for j in range(K):
                counts[:, j] = post[L[:, a] == j].sum(axis=0)
            new_theta = ((counts + M_STEP_SMOOTHING)
                         / (counts.sum(axis=1, keepdims=True)
                            + K * M_STEP_SMOOTHING))
            max_change = max(max_change,
                             float(np.abs(new_theta - thetas[a]).max()))
            thetas[a] = new_theta
        if max_change < tol:
            break
    ll, like = _staple_loglik(L, prior, thetas)
    loglik_trace.append(ll)
    post = like / like.sum(axis=1, keepdims=True)
    fused = post.argmax(axis=1)
    model = AnnotatorModel(tuple(TransitionMatrix(t) for t in thetas), prior)
    return post, model, fused, loglik_trace


def min_loss_label(per_annotator_losses, annotator_labels):
    """Annotator with the smallest loss (ties to the lowest index) and that
    annotator's label."""
    losses = np.asarray(per_annotator_losses, dtype=np.float64)
    if losses.size < 1 or not np.all(np.isfinite(losses)):
        raise ValueError("min_loss_label: need finite losses for A >= 1")
    a = int(losses.argmin())
    return a, int(np.asarray(annotator_labels)[a])


def train_min_loss_label(ds, config, test_ds=None):
    """SGD where each sample back-propagates only the annotator label with
    the smallest current loss (ties to the lowest annotator index)."""
    if ds.annotator_labels is None:
        raise ValueError("train_min_loss_label: dataset has no annotator labels")
    rng = Rng(config.seed)
    params = init(config.arch, ds.dim, ds.num_classes, config.seed,
                  config.hidden, config.capacity_scale)
    L = ds.annotator_labels
    X = ds.features
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(ds.n)
        epoch_losses = []
        for start in range(0, ds.n, config.batch_size):
            idx = order[start:start + config.batch_size]
            logits, cache = forward_batch(params, X[idx])
            probs = softmax(logits)
            G = np.zeros_like(logits)
            for r, i in enumerate(idx):
                per_ann = [-np.log(max(float(probs[r, y]), 1e-12))
                           for y in L[i]]
                _, y_sel = min_loss_label(per_ann, L[i])
                epoch_losses.append(min(per_ann))
                G[r] = probs[r]
                G[r, y_sel] -= 1.0
            grads = backward_batch(params, G, cache)
            scale = config.learning_rate / len(idx)
            for name in params.arrays:
                params.arrays[name] -= scale * grads[name]
        row = {"epoch": epoch, "train_loss": float(np.mean(epoch_losses))}
        if test_ds is not None:
            from .model import predict
            truth = (test_ds.true_labels if test_ds.true_labels is not None
                     else test_ds.labels)
            row["test_accuracy"] = float(
                np.mean(predict(params, test_ds.features) == truth))
        history.append(row)
    return params, history


def train_with_confusion(ds, config, lambda_trace=0.01, test_ds=None):
    """Jointly learn the base classifier and per-annotator confusion
    matrices by SGD; confusions are row-softmax of unconstrained matrices
    and their traces are penalized to break the estimation ambiguity.

    Per sample, annotator a's predicted noisy distribution is
    theta_a^T p(.|x) and the loss sums CE terms over annotators; the trace
    penalty lambda * sum_a trace(theta_a) is applied once per batch step.
    Returns (ModelParams, AnnotatorModel, history).
    """
    if ds.annotator_labels is None:
        raise ValueError("train_with_confusion: dataset has no annotator labels")
    if lambda_trace < 0:
        raise ValueError("lambda_trace must be >= 0")
    L = ds.annotator_labels
    A = L.shape[1]
    K = ds.num_classes
    rng = Rng(config.seed)
    params = init(config.arch, ds.dim, K, config.seed,
                  config.hidden, config.capacity_scale)
    # identity-leaning unconstrained confusion params (row-softmax ~ 0.8 diag)
    off = np.log(0.2 / max(K - 1, 1))
    qs = [np.full((K, K), off) + (np.log(0.8) - off) * np.eye(K)
          for _ in range(A)]
    X = ds.features
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(ds.n)
        epoch_losses = []
        for start in range(0, ds.n, config.batch_size):
            idx = order[start:start + config.batch_size]
            logits, cache = forward_batch(params, X[idx])
            probs = softmax(logits)
            G = np.zeros_like(logits)
            gqs = [np.zeros((K, K)) for _ in range(A)]
            for r, i in enumerate(idx):
                p = probs[r]
                for a in range(A):
                    theta = softmax(qs[a])
                    yo = L[i, a]
                    s = theta.T @ p
                    s_y = max(float(s[yo]), 1e-12)
                    epoch_losses.append(-np.log(s_y))
                    dl_dp = -theta[:, yo] / s_y
                    G[r] += grad_probs_to_logits(p, dl_dp)
                    dtheta = np.zeros((K, K))
                    dtheta[:, yo] = -p / s_y
                    gqs[a] += theta * (dtheta - np.sum(dtheta * theta,
                                                       axis=1, keepdims=True))
            scale = config.learning_rate / len(idx)
            grads = backward_batch(params, G, cache)
            for name in params.arrays:
                params.arrays[name] -= scale * grads[name]
            for a in range(A):
                theta = softmax(qs[a])
                # trace penalty gradient, applied once per batch step
                dtheta = lambda_trace * np.eye(K)
                gq_pen = theta * (dtheta - np.sum(dtheta * theta, axis=1,
                                                  keepdims=True))
                qs[a] -= scale * gqs[a] + config.learning_rate * gq_pen
        row = {"epoch": epoch, "train_loss": float(np.mean(epoch_losses))}
        if test_ds is not None:
            from .model import predict
            truth = (test_ds.true_labels if test_ds.true_labels is not None
                     else test_ds.labels)
            row["test_accuracy"] = float(
                np.mean(predict(params, test_ds.features) == truth))
        history.append(row)
    model = AnnotatorModel(tuple(TransitionMatrix(softmax(q)) for q in qs),
                           np.full(K, 1.0 / K))
    return params, model, history
