"""
Adaptive-moment (Adam) optimizer.
"""
from dataclasses import dataclass
from dataclasses import field

import numpy as np


@dataclass
class OptState:
    """The state of the optimizer.

    Args:
        lr: The learning rate.
        beta1: The decay rate of the first moment.
        beta2: The decay rate of the second moment.
        eps: Added to the denominator for numerical stability.
        step: The number of updates that have been applied.
        m: The first-moment accumulators, keyed by parameter name.
        v: The second-moment accumulators, keyed by parameter name.
    """
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def optimizer_step(params: dict[str, np.ndarray],
                   grads: dict[str, np.ndarray],
                   state: OptState) -> tuple[dict[str, np.ndarray], OptState]:
    """Apply one Adam update.

    Neither `params` nor `state` is modified. Parameters without a gradient
    are returned unchanged.

    Args:
        params: The current parameter values.
        grads: The gradients of the loss w.r.t. the parameters.
        state: The current optimizer state.

    Returns:
        The updated parameters and the updated state.
    """
    step = state.step + 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** step
    correction2 = 1.0 - b2 ** step
    new_params: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = dict(state.m)
    new_v: dict[str, np.ndarray] = dict(state.v)
    for name, value in params.items():
        g = grads.get(name)
        if g is None:
            new_params[name] = value
            continue
        if g.shape != value.shape:
            raise ValueError(f'The gradient of {name!r} has shape {g.shape}, expected {value.shape}')
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(value)
            v = np.zeros_like(value)
        elif m.shape != value.shape:
            raise ValueError(f'The moments of {name!r} have shape {m.shape}, expected {value.shape}')
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        update = state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        new_params[name] = (value - update).astype(value.dtype)
        new_m[name] = m.astype(value.dtype)
        new_v[name] = v.astype(value.dtype)
    new_state = OptState(lr=state.lr, beta1=b1, beta2=b2, eps=state.eps, step=step, m=new_m, v=new_v)
    return new_params, new_state
