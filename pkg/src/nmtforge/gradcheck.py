"""Central finite-difference gradient checking.

Only meaningful at float64: the default step h=1e-5 drowns in rounding
noise at single precision.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .autodiff import Tape, Tensor, backward


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-4) -> float:
    """Max elementwise |a-n| / max(|a|, |n|, floor).

    The floor keeps near-zero gradients from amplifying finite-difference
    noise into spurious failures.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def numeric_gradient(
    fn: Callable[[], float],
    x: np.ndarray,
    h: float = 1e-5,
    indices: Sequence[int] | None = None,
) -> np.ndarray:
    """d fn / d x by central differences, perturbing ``x`` in place.

    ``fn`` must read the current contents of ``x`` on every call.  When
    ``indices`` is given only those flat positions are probed; the rest of
    the returned array is NaN so callers can mask their comparison.
    """
    flat = x.ravel()
    grad = np.full(x.size, np.nan, dtype=np.float64)
    probe = range(x.size) if indices is None else indices
    for i in probe:
        orig = flat[i]
        flat[i] = orig + h
        f_plus = fn()
        flat[i] = orig - h
        f_minus = fn()
        flat[i] = orig
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad.reshape(x.shape)


def check_gradients(
    loss_fn: Callable[[], Tensor],
    wrt: Iterable[Tensor],
    h: float = 1e-5,
    floor: float = 1e-4,
    samples_per_tensor: int | None = None,
    seed: int = 0,
) -> float:
    """Compare tape gradients of ``loss_fn()`` against central differences.

    Returns the worst relative error over all probed components.  With
    ``samples_per_tensor`` set, only that many randomly chosen components
    of each tensor are probed (for whole-model checks where a dense sweep
    would be too slow); otherwise every component is checked.
    """
    tensors = list(wrt)
    for t in tensors:
        t.zero_grad()
    with Tape():
        loss = loss_fn()
        backward(loss)
    analytic = [np.array(t.grad, dtype=np.float64) for t in tensors]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for t, a in zip(tensors, analytic):
        if samples_per_tensor is None or t.size <= samples_per_tensor:
            indices = None
        else:
            indices = rng.choice(t.size, size=samples_per_tensor, replace=False)
        numeric = numeric_gradient(lambda: float(loss_fn().data), t.data, h=h, indices=indices)
        if indices is None:
            worst = max(worst, relative_error(a, numeric, floor=floor))
        else:
            sel = np.asarray(indices)
            worst = max(
                worst,
                relative_error(a.ravel()[sel], numeric.ravel()[sel], floor=floor),
            )
    return worst
