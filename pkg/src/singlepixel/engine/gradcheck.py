"""Central finite-difference gradient verification."""

import numpy as np

from ..errors import NonFiniteError
from .tensor import Tensor, backward


def grad_check(f, point, step=1e-5):
    """Compare analytic gradients of a scalar function against central differences.

    f maps one Tensor (or a tuple of Tensors) to a scalar Tensor. Returns the
    max over all coordinates of |analytic - numeric| / max(1, |numeric|).
    """
    points = point if isinstance(point, (tuple, list)) else (point,)
    inputs = [Tensor(np.array(p.data if isinstance(p, Tensor) else p, dtype=np.float64), requires_grad=True) for p in points]

    loss = f(*inputs)
    if not np.all(np.isfinite(loss.data)):
        raise NonFiniteError("grad_check", "forward")
    backward(loss)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]

    def eval_at():
        out = f(*[t.detach() for t in inputs])
        val = float(out.data)
        if not np.isfinite(val):
            raise NonFiniteError("grad_check", "finite-difference probe")
        return val

    worst = 0.0
    for t, g in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            fp = eval_at()
            flat[i] = orig - step
            fm = eval_at()
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * step)
            err = abs(gflat[i] - numeric) / max(1.0, abs(numeric))
            if err > worst:
                worst = err
    return worst
