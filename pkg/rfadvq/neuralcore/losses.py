"""
Loss functions. Each returns the loss and its gradient w.r.t. the prediction.
"""
import numpy as np
from scipy.special import logsumexp
from scipy.special import softmax


def softmax_cross_entropy(logits: np.ndarray,
                          labels: np.ndarray,
                          *,
                          reduction: str = 'mean') -> tuple[float | np.ndarray, np.ndarray]:
    """Cross entropy of the softmax of `logits`.

    The log-sum-exp is stabilized so that the result is finite for logits
    of any finite magnitude.

    Args:
        logits: Shape (B, K).
        labels: Shape (B,), integers in [0, K).
        reduction: One of ``'mean'``, ``'sum'`` or ``'none'`` (per sample).

    Returns:
        The loss and the gradient w.r.t. `logits`.
    """
    labels = np.asarray(labels, dtype=int)
    b, k = logits.shape
    if labels.shape != (b,):
        raise ValueError(f'Expected {b} labels, got shape {labels.shape}')
    if np.any(labels < 0) or np.any(labels >= k):
        raise ValueError(f'A label must be in [0, {k})')

    rows = np.arange(b)
    per_sample = logsumexp(logits, axis=1) - logits[rows, labels]
    grad = softmax(logits, axis=1)
    grad[rows, labels] -= 1
    if reduction == 'none':
        return per_sample, grad
    if reduction == 'sum':
        return float(per_sample.sum()), grad
    if reduction == 'mean':
        return float(per_sample.mean()), grad / b
    raise ValueError(f'Invalid reduction {reduction!r}')


def mse(prediction: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over every element."""
    if prediction.shape != target.shape:
        raise ValueError(f'Shape mismatch {prediction.shape} != {target.shape}')
    diff = prediction - target
    return float(np.mean(diff ** 2)), (2.0 / diff.size) * diff
