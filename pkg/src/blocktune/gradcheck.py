"""Finite-difference validation of the selective backward pass."""

from __future__ import annotations

import numpy as np

from .errors import UsageError
from .model import BlockNet, backward_selected, forward, selected_params
from .nn import softmax_xent


def grad_check(net: BlockNet, selection, X: np.ndarray, y: np.ndarray,
               h: float = 1e-4) -> float:
    """Max relative error between analytic and central-difference gradients.

    Every scalar parameter in the selected blocks is perturbed by +/- h,
    the batch loss is recomputed from scratch, and the two-sided slope is
    compared against backward_selected.  Relative error is
    |a - n| / max(|a| + |n|, 1e-6).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] == 0:
        raise UsageError("grad_check needs a nonempty batch")
    _, grads = backward_selected(net, selection, X, y)
    work = net.copy()

    def batch_loss() -> float:
        loss, _ = softmax_xent(forward(work, X), y)
        return loss

    max_rel = 0.0
    for block_id, pname, arr in selected_params(work, selection):
        analytic = grads[block_id][pname].ravel()
        flat = arr.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = batch_loss()
            flat[i] = orig - h
            lm = batch_loss()
            flat[i] = orig
            numeric = (lp - lm) / (2.0 * h)
            a = analytic[i]
            rel = abs(a - numeric) / max(abs(a) + abs(numeric), 1e-6)
            if rel > max_rel:
                max_rel = rel
    return max_rel
