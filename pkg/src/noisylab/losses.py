"""Loss catalog: cross-entropy, MAE, iMAE (gradient rule), smoothed-label KL,
and transition-matrix backward/forward corrections.

Every loss exposes a value and a gradient with respect to the logits; the
gradient is what the trainer consumes. iMAE is defined only at gradient
level: it keeps the MAE gradient direction but rescales the l1 norm to
exp(tau * p_y) * (1 - p_y), so confidently-fit samples dominate.
"""

from __future__ import annotations

import numpy as np

LOG_CLAMP = 1e-12
COND_LIMIT = 1e8


class LossSpec:
    """Selects a loss. kind in {ce, mae, imae, smooth_kl, backward, forward}.
    tau is the imae temperature, epsilon the smooth_kl smoothing, transition
    the matrix for backward/forward, base the backward base loss."""

    def __init__(self, kind, tau=8.0, epsilon=0.0, transition=None, base="ce"):
        if kind not in ("ce", "mae", "imae", "smooth_kl", "backward", "forward"):
            raise ValueError(f"unknown loss kind: {kind}")
        if tau <= 0:
            raise ValueError("tau must be positive")
        if not 0.0 <= epsilon < 1.0:
            raise ValueError("epsilon must be in [0,1)")
        if kind in ("backward", "forward") and transition is None:
            raise ValueError(f"{kind} correction requires a transition matrix")
        if base not in ("ce", "mae"):
            raise ValueError("backward base must be ce or mae")
        if kind == "backward":
            _check_invertible(transition.t)
        self.kind = kind
        self.tau = float(tau)
        self.epsilon = float(epsilon)
        self.transition = transition
        self.base = base

    def to_json(self):
        obj = {"kind": self.kind}
        if self.kind == "imae":
            obj["tau"] = self.tau
        if self.kind == "smooth_kl":
            obj["epsilon"] = self.epsilon
        if self.kind in ("backward", "forward"):
            obj["transition"] = self.transition.to_json()
        if self.kind == "backward":
            obj["base"] = self.base
        return obj

    @classmethod
    def from_json(cls, obj):
        from .noise import TransitionMatrix
        kw = dict(obj)
        kind = kw.pop("kind")
        if "transition" in kw:
            kw["transition"] = TransitionMatrix.from_json(kw["transition"])
        return cls(kind, **kw)


class SingularTransitionError(ValueError):
    pass


def _check_invertible(t):
    cond = np.linalg.cond(t)
    if not np.isfinite(cond) or cond >= COND_LIMIT:
        raise SingularTransitionError(
            f"transition matrix ill-conditioned for inversion "
            f"(condition number {cond:.3g} >= {COND_LIMIT:.0e})")
    return cond


def ce(probs, y):
    """Cross-entropy -log p_y with the log clamped at 1e-12."""
    return -np.log(max(float(probs[y]), LOG_CLAMP))


def ce_grad_logits(probs, y):
    g = np.array(probs, dtype=np.float64)
    g[y] -= 1.0
    return g


def mae(probs, y):
    """l1 distance between one-hot truth and prediction: 2(1 - p_y)."""
    return 2.0 * (1.0 - float(probs[y]))


def mae_grad_logits(probs, y):
    """Gradient wrt logits; its l1 norm is exactly 4 p_y (1 - p_y)."""
    p = np.asarray(probs, dtype=np.float64)
    e = np.zeros_like(p)
    e[y] = 1.0
    return -2.0 * p[y] * (e - p)


def imae_grad_logits(probs, y, tau=8.0):
    """MAE gradient direction rescaled to l1 norm exp(tau*p_y)(1-p_y)."""
    p = np.asarray(probs, dtype=np.float64)
    e = np.zeros_like(p)
    e[y] = 1.0
    # -(e - p) * exp(tau p_y)/2 has l1 norm exp(tau p_y)(1 - p_y) since
    # ||e - p||_1 = 2(1 - p_y); the p_y -> 0 limit direction is used so the
    # weight does not vanish on hard samples.
    return -0.5 * np.exp(tau * p[y]) * (e - p)


def smooth_target(y, K, epsilon):
    q = np.full(K, epsilon / K)
    q[y] += 1.0 - epsilon
    return q


def smooth_kl(probs, y, epsilon):
    """KL(q || p) against the smoothed one-hot target q."""
    p = np.asarray(probs, dtype=np.float64)
    q = smooth_target(y, len(p), epsilon)
    pc = np.maximum(p, LOG_CLAMP)
    nz = q > 0
    return float(np.sum(q[nz] * (np.log(q[nz]) - np.log(pc[nz]))))


def smooth_kl_grad_logits(probs, y, epsilon):
    p = np.asarray(probs, dtype=np.float64)
    return p - smooth_target(y, len(p), epsilon)


def loss_vector(base, probs):
    """Per-label loss vector: component j is the base loss if the label
    were j. Base is ce or mae."""
    p = np.asarray(probs, dtype=np.float64)
    if base == "ce":
        return -np.log(np.maximum(p, LOG_CLAMP))
    if base == "mae":
        return 2.0 * (1.0 - p)
    raise ValueError("loss_vector: base must be ce or mae")


def _loss_vector_grad_logits(base, probs):
    """Rows j: gradient wrt logits of the per-label loss component j."""
    p = np.asarray(probs, dtype=np.float64)
    K = len(p)
    eye = np.eye(K)
    if base == "ce":
        return p[None, :] - eye
    if base == "mae":
        return -2.0 * p[:, None] * (eye - p[None, :])
    raise ValueError("base must be ce or mae")


def backward_corrected(T, probs, observed_y, base="ce"):
    """Patrini backward correction: component observed_y of T^{-1} l(p).
    May be negative; that is required for unbiasedness."""
    _check_invertible(T.t)
    inv_row = np.linalg.solve(T.t.T, np.eye(T.k)[observed_y])  # row of T^-1
    return float(inv_row @ loss_vector(base, probs))


def backward_corrected_grad_logits(T, probs, observed_y, base="ce"):
    inv_row = np.linalg.solve(T.t.T, np.eye(T.k)[observed_y])
    return inv_row @ _loss_vector_grad_logits(base, probs)


def forward_corrected(T, probs, observed_y):
    """Patrini forward correction: CE of q = T^T p against the observed
    label; q is a valid probability vector by stochastic mixing."""
    q = T.t.T @ np.asarray(probs, dtype=np.float64)
    return -np.log(max(float(q[observed_y]), LOG_CLAMP))


def forward_corrected_grad_logits(T, probs, observed_y):
    p = np.asarray(probs, dtype=np.float64)
    q_y = max(float(T.t.T[observed_y] @ p), LOG_CLAMP)
    dl_dp = -T.t[:, observed_y] / q_y
    return grad_probs_to_logits(p, dl_dp)


def grad_probs_to_logits(probs, dl_dprobs):
    """Chain a gradient wrt softmax outputs through the softmax Jacobian."""
    p = np.asarray(probs, dtype=np.float64)
    v = np.asarray(dl_dprobs, dtype=np.float64)
    return p * (v - float(v @ p))


def loss_value(spec, probs, y):
    """Scalar loss for specs that define one (iMAE does not)."""
    if spec.kind == "ce":
        return ce(probs, y)
    if spec.kind == "mae":
        return mae(probs, y)
    if spec.kind == "smooth_kl":
        return smooth_kl(probs, y, spec.epsilon)
    if spec.kind == "backward":
        return backward_corrected(spec.transition, probs, y, spec.base)
    if spec.kind == "forward":
        return forward_corrected(spec.transition, probs, y)
    if spec.kind == "imae":
        # no closed-form primitive; report the underlying MAE value
        return mae(probs, y)
    raise ValueError(spec.kind)


def loss_grad_logits(spec, probs, y):
    if spec.kind == "ce":
        return ce_grad_logits(probs, y)
    if spec.kind == "mae":
        return mae_grad_logits(probs, y)
    if spec.kind == "imae":
        return imae_grad_logits(probs, y, spec.tau)
    if spec.kind == "smooth_kl":
        return smooth_kl_grad_logits(probs, y, spec.epsilon)
    if spec.kind == "backward":
        return backward_corrected_grad_logits(spec.transition, probs, y,
                                              spec.base)
    if spec.kind == "forward":
        return forward_corrected_grad_logits(spec.transition, probs, y)
    raise ValueError(spec.kind)


def has_primitive_value(spec):
    """Whether finite differences of loss_value recover loss_grad_logits."""
    return spec.kind != "imae"
