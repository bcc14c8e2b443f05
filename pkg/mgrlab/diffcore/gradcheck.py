"""This file handles the gradient checker for the diffcore part."""

from __future__ import annotations

from collections.abc import Callable

import numpy as np

from mgrlab.diffcore.errors import ContractError
from mgrlab.diffcore.tensor import Tape, Tensor, gradient, no_record


# This function checks the gradient work used in this file.
def grad_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    step: float = 1e-5,
) -> float:
    """Max relative error between autodiff and central differences.

    The error for each coordinate is
    ``|autodiff - numeric| / (|numeric| + 1e-8)``.  ``x`` must be a leaf
    with ``requires_grad=True``; its values are restored afterwards.
    """
    if not x.requires_grad:
        raise ContractError("grad_check needs a leaf with requires_grad=True")

    with Tape() as tape:
        out = f(x)
    (analytic,) = gradient(tape, out, [x])

    numeric = np.zeros_like(x.values)
    flat = x.values.reshape(-1)
    with no_record():
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            upper = f(x).item()
            flat[i] = original - step
            lower = f(x).item()
            flat[i] = original
            numeric.reshape(-1)[i] = (upper - lower) / (2.0 * step)

    error = np.abs(analytic.values - numeric) / (np.abs(numeric) + 1e-8)
    return float(error.max()) if error.size else 0.0
