"""Loss, analytic gradients, and the SGD variant used for training.

The training objective is the sum of a soft Dice term on the foreground
channel and voxel-wise cross-entropy:

* ``L_dice = 1 - (2*I + eps) / (P + G + eps)`` where, over the whole
  batch, ``I = sum(p1 * g1)``, ``P = sum(p1)``, ``G = sum(g1)``, with
  ``p1`` the foreground softmax probability and ``g1`` the binary target;
* ``L_ce`` is the mean over voxels of ``-log p_true`` with probabilities
  clamped at 1e-12.

Both reductions run in float64 regardless of activation dtype so the
scalar loss (and its finite-difference behaviour) is stable. Gradients
with respect to the logits are analytic:

* cross-entropy through softmax: ``(p - g) / N_voxels``;
* dice through softmax: with ``d = dL/dp1 = -(2*g1*(P+G+eps) - (2I+eps))
  / (P+G+eps)^2``, ``dz1 = d * p1 * (1 - p1)`` and ``dz0 = -d * p1 * p0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TrainingError
from .nn_ops import softmax_channels

DICE_EPS = 1e-5
CE_CLAMP = 1e-12


@dataclass(frozen=True)
class OptimizerConfig:
    lr0: float = 0.01
    momentum: float = 0.99
    power: float = 0.9

    def __post_init__(self):
        if self.lr0 < 0 or not np.isfinite(self.lr0):
            raise TrainingError(f"lr0 must be >= 0, got {self.lr0}")
        if not 0.0 <= self.momentum < 1.0:
            raise TrainingError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.power < 0 or not np.isfinite(self.power):
            raise TrainingError(f"power must be >= 0, got {self.power}")


@dataclass(frozen=True)
class LossReport:
    total: float
    dice: float
    ce: float
    soft_dice: float  # the (2I+eps)/(P+G+eps) score itself, = 1 - dice term
    epsilon: float = DICE_EPS


def dice_ce_loss(logits: np.ndarray, target: np.ndarray, *, eps: float = DICE_EPS,
                 with_grad: bool = True):
    """Compute the combined loss for logits (B, 2, X, Y, Z) and a binary
    target (B, X, Y, Z) of {0, 1}.

    Returns ``(report, dlogits)``; ``dlogits`` is None when ``with_grad``
    is false.
    """
    if logits.ndim != 5 or logits.shape[1] != 2:
        raise TrainingError(f"expected logits (B, 2, X, Y, Z), got {logits.shape}")
    if target.shape != (logits.shape[0],) + logits.shape[2:]:
        raise TrainingError(
            f"target shape {target.shape} does not match logits {logits.shape}"
        )
    probs = softmax_channels(logits)
    p1 = probs[:, 1].astype(np.float64)
    g1 = target.astype(np.float64)
    n_vox = g1.size

    inter = float((p1 * g1).sum())
    psum = float(p1.sum())
    gsum = float(g1.sum())
    denom = psum + gsum + eps
    soft_dice = (2.0 * inter + eps) / denom
    dice_term = 1.0 - soft_dice

    p_true = np.where(target.astype(bool), probs[:, 1], probs[:, 0]).astype(np.float64)
    ce_term = float(-np.log(np.maximum(p_true, CE_CLAMP)).mean())

    report = LossReport(total=dice_term + ce_term, dice=dice_term, ce=ce_term,
                        soft_dice=soft_dice, epsilon=eps)
    if not with_grad:
        return report, None

    # cross-entropy: d/dz = (softmax - onehot) / N
    g_onehot0 = 1.0 - g1
    dz = np.empty_like(probs, dtype=np.float64)
    dz[:, 0] = (probs[:, 0] - g_onehot0) / n_vox
    dz[:, 1] = (probs[:, 1] - g1) / n_vox

    # dice: dL/dp1, then through softmax on the two channels
    d_p1 = -(2.0 * g1 * denom - (2.0 * inter + eps)) / (denom * denom)
    p0 = probs[:, 0].astype(np.float64)
    dz[:, 1] += d_p1 * p1 * (1.0 - p1)
    dz[:, 0] += -d_p1 * p1 * p0
    return report, dz.astype(logits.dtype)


def poly_lr(base_lr: float, epoch: int, max_epochs: int, power: float = 0.9) -> float:
    """Polynomial decay: ``base_lr * (1 - epoch / max_epochs) ** power``.

    Defined for ``0 <= epoch <= max_epochs``; the final epoch maps to 0.
    """
    if not 0 <= epoch <= max_epochs:
        raise TrainingError(f"epoch {epoch} outside [0, {max_epochs}]")
    return base_lr * (1.0 - epoch / max_epochs) ** power


def sgd_nesterov_step(params, grads: dict[str, np.ndarray], lr: float,
                      momentum: float = 0.99) -> None:
    """In-place Nesterov momentum update on a :class:`~.unet.NetParams`.

    For each tensor: ``v <- m*v - lr*g``; ``theta <- theta + m*v - lr*g``.
    With momentum 0 this is exactly plain SGD. Raises TrainingError if any
    gradient is non-finite, leaving parameters untouched.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in {name}; update aborted")
    for name, theta in params.tensors.items():
        g = grads.get(name)
        if g is None:
            raise TrainingError(f"missing gradient for tensor {name}")
        v = params.velocity[name]
        g = g.astype(theta.dtype, copy=False)
        v *= momentum
        v -= lr * g
        theta += momentum * v - lr * g
