"""
General classes and functions.
"""
import time
from contextlib import contextmanager
from typing import Iterator

import numpy as np

from .log import logger


def ave_std(data: np.ndarray,
            *,
            axis: int | tuple[int] = None,
            ddof: int = 1) -> tuple[float | np.ndarray, float | np.ndarray]:
    """Calculate the average and standard deviation.

    Args:
        data: The values to compute the average and standard deviation of.
        axis: Axis or axes along which the average and standard deviation is computed.
            The default is to compute the values of the flattened array.
        ddof: Delta degrees of freedom of the standard deviation.

    Returns:
        The average value and the standard deviation.
    """
    data = np.asarray(data)
    if data.size > ddof:
        return np.average(data, axis=axis), np.std(data, axis=axis, ddof=ddof)
    if data.size == 1:
        return data.ravel()[0], np.nan
    return np.nan, np.nan


def batches(size: int,
            batch_size: int,
            *,
            rng: np.random.Generator = None) -> Iterator[np.ndarray]:
    """Yield the indices of consecutive batches.

    Args:
        size: The number of items.
        batch_size: The maximum number of items in a batch.
        rng: If specified then the indices are shuffled with this generator.

    Yields:
        The indices of each batch.
    """
    if batch_size < 1:
        raise ValueError(f'The batch size must be >= 1, got {batch_size}')
    order = rng.permutation(size) if rng is not None else np.arange(size)
    for start in range(0, size, batch_size):
        yield order[start:start+batch_size]


def derive_seeds(seed: int, n: int) -> list[int]:
    """Derive `n` independent 32-bit seeds from a parent seed.

    The same (seed, n) pair always returns the same list and the i'th
    value does not depend on `n`.
    """
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(c.generate_state(1)[0]) for c in children]


def hhmmss(seconds: float) -> str:
    """Convert seconds to a hh:mm:ss representation."""
    one_day = 86400
    if seconds < one_day:
        return time.strftime('%H:%M:%S', time.gmtime(seconds))

    days = int(seconds // one_day)
    hms = hhmmss(seconds - (days * one_day))
    out = f'{hms} (+{days} day'
    if days == 1:
        return f'{out})'
    return f'{out}s)'


@contextmanager
def timed(what: str) -> Iterator[None]:
    """Log an INFO message when `what` starts and when it finishes."""
    logger.info(f'{what} started')
    t0 = time.perf_counter()
    yield
    logger.info(f'{what} finished [elapsed {hhmmss(time.perf_counter() - t0)}]')
