"""Central finite-difference verification of analytic gradients.

Used by the test suite and by the ``grad-check`` CLI command. Checks run in
float64 with step 1e-5; an element passes when
``|analytic - numeric| / max(|analytic|, |numeric|, floor) < tol``.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward

STEP = 1e-5
TOL = 1e-4
FLOOR = 1e-3  # guards the ratio where both gradients are essentially zero


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = FLOOR) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def numeric_gradient(make_loss: Callable[[], Tensor], t: Tensor,
                     indices=None, step: float = STEP) -> np.ndarray:
    """Central differences of the scalar ``make_loss()`` w.r.t. elements of ``t``.

    Mutates ``t.data`` in place and restores it. ``indices`` restricts the
    check to a flat-index subset (useful for large parameter tensors).
    """
    flat = t.data.reshape(-1)
    indices = list(range(flat.size)) if indices is None else list(indices)
    g = np.zeros(len(indices))
    for k, idx in enumerate(indices):
        orig = flat[idx]
        flat[idx] = orig + step
        fp = make_loss().item()
        flat[idx] = orig - step
        fm = make_loss().item()
        flat[idx] = orig
        g[k] = (fp - fm) / (2.0 * step)
    return g


def check_gradients(make_loss: Callable[[], Tensor], params: Sequence[Tensor],
                    sample_per_tensor: int | None = None,
                    rng: np.random.Generator | None = None,
                    step: float = STEP) -> float:
    """Worst relative error between analytic and numeric gradients.

    ``make_loss`` must rebuild the forward pass from the current values of
    ``params`` on every call. With ``sample_per_tensor`` set, only that many
    randomly chosen elements of each tensor are differenced.
    """
    for p in params:
        p.grad = None
    loss = make_loss()
    backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    for p in params:
        p.grad = None

    worst = 0.0
    for p, ga in zip(params, analytic):
        flat_an = ga.reshape(-1)
        if sample_per_tensor is None or p.data.size <= sample_per_tensor:
            idx = list(range(p.data.size))
        else:
            if rng is None:
                raise ValueError("sampled checking requires an rng")
            idx = sorted(rng.choice(p.data.size, size=sample_per_tensor, replace=False).tolist())
        num = numeric_gradient(make_loss, p, indices=idx, step=step)
        worst = max(worst, max_rel_error(flat_an[idx], num))
    return worst
