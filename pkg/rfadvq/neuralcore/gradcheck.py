"""
Compare analytic gradients with central finite differences.
"""
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .graph import Graph

LossFunction = Callable[[np.ndarray], tuple[float, np.ndarray]]


@dataclass(frozen=True)
class BlockCheck:
    """The result for one parameter block (or the input).

    Args:
        checked: The number of elements that were compared.
        max_relative_error: The largest relative error.
        passed: Whether every compared element is within tolerance.
    """
    checked: int
    max_relative_error: float
    passed: bool


@dataclass(frozen=True)
class GradCheckReport:
    blocks: dict[str, BlockCheck]
    tolerance: float

    @property
    def passed(self) -> bool:
        """Whether every block passed."""
        return all(b.passed for b in self.blocks.values())

    def failures(self) -> list[str]:
        """The names of the blocks that failed."""
        return [k for k, v in self.blocks.items() if not v.passed]


def half_squared_norm(output: np.ndarray) -> tuple[float, np.ndarray]:
    """The loss ½‖y‖² and its gradient y."""
    return 0.5 * float(np.sum(output * output)), output.copy()


def relative_error(analytic: np.ndarray, numeric: np.ndarray, *, floor: float = 1e-6) -> np.ndarray:
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def numeric_gradient(func: Callable[[], float],
                     array: np.ndarray,
                     indices: np.ndarray,
                     h: float) -> np.ndarray:
    """Central differences of `func` w.r.t. the flat `indices` of `array` (modified in place and restored)."""
    flat = array.reshape(-1)
    out = np.empty(indices.size)
    for j, i in enumerate(indices):
        original = flat[i]
        flat[i] = original + h
        plus = func()
        flat[i] = original - h
        minus = func()
        flat[i] = original
        out[j] = (plus - minus) / (2 * h)
    return out


def grad_check(graph: Graph,
               x: np.ndarray,
               loss: LossFunction = half_squared_norm,
               *,
               tolerance: float = 1e-4,
               h: float = 1e-5,
               samples: int = 16,
               rng: np.random.Generator = None) -> GradCheckReport:
    """Verify :meth:`Graph.backward` against central finite differences.

    Args:
        graph: A graph in 64-bit mode (see :meth:`Graph.astype`).
        x: The input batch.
        loss: Maps the graph output to a scalar loss and its gradient.
        tolerance: The maximum relative error.
        h: The finite-difference step.
        samples: The maximum number of elements to compare per block.
        rng: Selects the random subsample of elements.

    Returns:
        One result per parameter block and one for ``'input'``.
    """
    if graph.dtype != np.float64:
        raise ValueError('A gradient check requires a float64 graph, use Graph.astype(numpy.float64)')
    rng = rng or np.random.default_rng(0)
    x = np.array(x, dtype=np.float64)

    _, out_grad = loss(graph.forward(x))
    param_grads, input_grad = graph.backward(out_grad)
    param_grads = {k: v.copy() for k, v in param_grads.items()}

    def evaluate() -> float:
        return loss(graph.forward(x))[0]

    targets = [('input', x, input_grad)]
    params = graph.parameters()
    for name, value in params.items():
        targets.append((name, value, param_grads.get(name, np.zeros_like(value))))

    blocks: dict[str, BlockCheck] = {}
    for name, array, analytic in targets:
        n = min(samples, array.size)
        indices = rng.choice(array.size, size=n, replace=False)
        numeric = numeric_gradient(evaluate, array, indices, h)
        err = relative_error(analytic.reshape(-1)[indices], numeric)
        worst = float(err.max()) if err.size else 0.0
        blocks[name] = BlockCheck(checked=n, max_relative_error=worst, passed=worst <= tolerance)
    return GradCheckReport(blocks=blocks, tolerance=tolerance)
