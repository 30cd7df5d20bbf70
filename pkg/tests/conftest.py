import numpy as np
import pytest

from hcn import neural


@pytest.fixture
def small_params():
    """4-action, 8-hidden net over a 5-dim observation."""
    return neural.init_parameters(obs_size=5, action_count=4, hidden=8, seed=13)


def finite_difference_gradients(params, loss_fn, step=1e-5):
    """Central-difference gradient of ``loss_fn(params)`` w.r.t. every entry.

    Independent oracle: perturbs one parameter at a time and re-evaluates the
    loss, never touching the analytic backward pass.
    """
    grads = neural.Gradients.zeros_like(params)
    for tensor, slot in zip(params.tensors(), grads.tensors()):
        flat = tensor.reshape(-1)
        gflat = slot.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            up = loss_fn(params)
            flat[k] = orig - step
            down = loss_fn(params)
            flat[k] = orig
            gflat[k] = (up - down) / (2.0 * step)
    return grads


def max_relative_error(analytic, numeric, floor=1e-6):
    """Worst-case |a - n| / max(|a|, |n|, floor) over all tensors."""
    worst = 0.0
    for a, n in zip(analytic.tensors(), numeric.tensors()):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst
