"""Dense float64 layer primitives with exact reverse-mode gradients.

The layer vocabulary is fixed: affine, ReLU, identity skip, and softmax
cross-entropy. All operations take 2-D arrays of shape (batch, features),
are pure with respect to their inputs, and return freshly allocated
outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, ShapeError


@dataclass
class LayerGrads:
    """Gradients of one affine layer: dW (m,n), db (n,), dX (B,m)."""

    dW: np.ndarray
    db: np.ndarray
    dX: np.ndarray


def _check_linear_shapes(x: np.ndarray, W: np.ndarray, b: np.ndarray | None) -> None:
    if x.ndim != 2 or W.ndim != 2:
        raise ShapeError(f"expected 2-D operands, got x{x.shape} W{W.shape}")
    if x.shape[1] != W.shape[0]:
        raise ShapeError(f"x has shape {x.shape} but W has shape {W.shape}")
    if b is not None and b.shape != (W.shape[1],):
        raise ShapeError(f"b has shape {b.shape} but W has shape {W.shape}")


def linear_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Affine map y[r,c] = sum_k x[r,k] W[k,c] + b[c]."""
    _check_linear_shapes(x, W, b)
    return x @ W + b


def linear_backward(x: np.ndarray, W: np.ndarray, dY: np.ndarray) -> LayerGrads:
    """Gradients of linear_forward under the upstream cotangent dY.

    dW = x^T dY, db = column sum of dY, dX = dY W^T.
    """
    _check_linear_shapes(x, W, None)
    if dY.shape != (x.shape[0], W.shape[1]):
        raise ShapeError(f"dY has shape {dY.shape}, expected {(x.shape[0], W.shape[1])}")
    return LayerGrads(dW=x.T @ dY, db=dY.sum(axis=0), dX=dY @ W.T)


def linear_backward_input(W: np.ndarray, dY: np.ndarray) -> np.ndarray:
    """Input gradient dX = dY W^T alone, for layers whose parameters stay frozen."""
    if dY.ndim != 2 or W.ndim != 2 or dY.shape[1] != W.shape[1]:
        raise ShapeError(f"dY has shape {dY.shape} but W has shape {W.shape}")
    return dY @ W.T


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, dY: np.ndarray) -> np.ndarray:
    """Masks dY where x <= 0 (subgradient 0 at the kink)."""
    if x.shape != dY.shape:
        raise ShapeError(f"x has shape {x.shape} but dY has shape {dY.shape}")
    return np.where(x > 0.0, dY, 0.0)


def softmax_xent(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch plus its logit gradient.

    The softmax subtracts the row max before exponentiating, so large
    logits cannot overflow. dLogits = (softmax - onehot) / B, hence every
    row of the gradient sums to zero.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise ShapeError(f"logits must be 2-D, got shape {logits.shape}")
    B, C = logits.shape
    if C < 2:
        raise InputError(f"need at least 2 classes, got {C}")
    if B == 0:
        raise InputError("empty batch")
    if labels.shape != (B,):
        raise ShapeError(f"labels have shape {labels.shape}, expected ({B},)")
    labels = labels.astype(np.int64)
    if labels.min() < 0 or labels.max() >= C:
        raise InputError(f"labels must lie in [0, {C}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    z = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(z)
    denom = expz.sum(axis=1, keepdims=True)
    logp = z - np.log(denom)
    rows = np.arange(B)
    loss = float(-logp[rows, labels].mean())
    d = expz / denom
    d[rows, labels] -= 1.0
    d /= B
    return loss, d
