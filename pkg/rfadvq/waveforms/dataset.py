"""
Datapoints, datasets and dataset generation.
"""
import math
from dataclasses import dataclass
from dataclasses import field

import numpy as np

from ..log import logger
from .base import ComplexSequence
from .base import DegenerateWindowError
from .base import ModulationScheme
from .base import NUM_CLASSES
from .base import modulators
from .linear import rrc_taps
from .ofdm import CYCLIC_PREFIX
from .ofdm import SUBCARRIERS

WINDOW: int = 1024


@dataclass(frozen=True)
class IQDatapoint:
    """One labeled, peak-normalized datapoint.

    Args:
        i_channel: The real components (channel 1).
        q_channel: The imaginary components (channel 2).
        label: The class label.
        scale: The factor that the complex samples were multiplied by.
    """
    i_channel: np.ndarray
    q_channel: np.ndarray
    label: int
    scale: float = 1.0

    @property
    def array(self) -> np.ndarray:
        """The datapoint as a (2, 1024) array."""
        return np.stack((self.i_channel, self.q_channel))


@dataclass(frozen=True)
class DatasetSpec:
    """What to generate.

    Args:
        per_class_count: The number of datapoints per class.
        seed: The seed of the random-number generator.
        split: The (train, test) fractions.
        schemes: The classes to generate (all six by default).
    """
    per_class_count: int
    seed: int = 0
    split: tuple[float, float] = (0.8, 0.2)
    schemes: tuple[ModulationScheme, ...] = tuple(ModulationScheme)

    def __post_init__(self) -> None:
        if self.per_class_count < 1:
            raise ValueError(f'per_class_count must be >= 1, got {self.per_class_count}')
        if any(f < 0 for f in self.split) or not math.isclose(sum(self.split), 1.0, abs_tol=1e-9):
            raise ValueError(f'The split fractions must be >= 0 and sum to 1, got {self.split}')
        object.__setattr__(self, 'schemes', tuple(ModulationScheme(s) for s in self.schemes))
        if not self.schemes:
            raise ValueError('At least one modulation scheme must be specified')


@dataclass
class Dataset:
    """A labeled collection of datapoints.

    Args:
        x: The datapoints, shape (N, 2, 1024), float32.
        labels: The class labels, shape (N,), uint8.
        std: The standard deviation of all values in the dataset from which
            this dataset was drawn (kept for the attack signal-to-noise ratio).
        meta: Any other information about how the dataset was created.
    """
    x: np.ndarray
    labels: np.ndarray
    std: float = math.nan
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if self.x.ndim != 3 or self.x.shape[1:] != (2, WINDOW):
            raise ValueError(f'The datapoints must have shape (N, 2, {WINDOW}), got {self.x.shape}')
        if self.labels.shape != (self.x.shape[0],):
            raise ValueError(f'Expected {self.x.shape[0]} labels, got {self.labels.shape}')
        if np.any(self.labels >= NUM_CLASSES):
            raise ValueError(f'A class label must be in [0, {NUM_CLASSES})')

    def __len__(self) -> int:
        return self.labels.size

    def by_class(self, label: int) -> 'Dataset':
        """Return the datapoints of one class."""
        return self.take(np.flatnonzero(self.labels == label))

    def counts(self) -> np.ndarray:
        """The number of datapoints per class label."""
        return np.bincount(self.labels, minlength=NUM_CLASSES)

    @property
    def classes(self) -> list[int]:
        """The class labels that are present."""
        return [int(c) for c in np.unique(self.labels)]

    def subset(self, labels) -> 'Dataset':
        """Return the datapoints whose class label is in `labels`."""
        return self.take(np.flatnonzero(np.isin(self.labels, np.asarray(list(labels), dtype=int))))

    def split(self, fractions: tuple[float, ...]) -> tuple['Dataset', ...]:
        """Split into parts per class, keeping the order within each class.

        The number of datapoints of a class in part k is the rounded
        cumulative fraction, so every datapoint is in exactly one part.
        """
        edges = np.cumsum((0.0,) + tuple(fractions))
        parts: list[list[np.ndarray]] = [[] for _ in fractions]
        for c in self.classes:
            idx = np.flatnonzero(self.labels == c)
            bounds = np.rint(edges * idx.size).astype(int)
            for k in range(len(fractions)):
                parts[k].append(idx[bounds[k]:bounds[k+1]])
        return tuple(self.take(np.concatenate(p) if p else np.empty(0, dtype=int)) for p in parts)

    def take(self, indices: np.ndarray) -> 'Dataset':
        """Return a new dataset containing the specified indices."""
        indices = np.asarray(indices, dtype=int)
        return Dataset(x=self.x[indices], labels=self.labels[indices], std=self.std, meta=dict(self.meta))


def complex_to_2d(window: ComplexSequence, label: int) -> IQDatapoint:
    """Convert 1024 complex samples to a 2-channel, peak-normalized datapoint.

    Args:
        window: The complex samples.
        label: The class label.

    Returns:
        The datapoint. Both channels are scaled by 1/max(|window|).
    """
    window = np.asarray(window, dtype=np.complex128)
    if window.shape != (WINDOW,):
        raise ValueError(f'The window must contain exactly {WINDOW} samples, got {window.shape}')
    peak = float(np.max(np.abs(window)))
    if peak == 0 or not math.isfinite(peak):
        raise DegenerateWindowError(f'Cannot normalize a window with a peak magnitude of {peak}')
    scaled = window / peak
    return IQDatapoint(i_channel=scaled.real.copy(), q_channel=scaled.imag.copy(),
                       label=int(label), scale=1.0 / peak)


def recombine(datapoint: IQDatapoint | np.ndarray) -> ComplexSequence:
    """Convert a datapoint (or a (..., 2, n) array) back to complex samples."""
    if isinstance(datapoint, IQDatapoint):
        return datapoint.i_channel + 1j * datapoint.q_channel
    a = np.asarray(datapoint)
    return a[..., 0, :] + 1j * a[..., 1, :]


def modulate(scheme: ModulationScheme, bits: np.ndarray, sps: int = None) -> ComplexSequence:
    """Modulate a bit sequence.

    Args:
        scheme: The modulation scheme.
        bits: The information bits. The length must be a multiple of the
            bits per symbol of the scheme.
        sps: Samples per symbol. Default is
            :attr:`~ModulationScheme.samples_per_symbol`, which is also the
            only value that is accepted.

    Returns:
        The modulated baseband signal.
    """
    scheme = ModulationScheme(scheme)
    expected = scheme.samples_per_symbol
    if sps is None:
        sps = expected
    if sps != expected:
        raise ValueError(f'{scheme} requires {expected} samples per symbol, got {sps}')
    bits = np.asarray(bits)
    if bits.size % scheme.bits_per_symbol:
        raise ValueError(f'The number of bits, {bits.size}, is not divisible by '
                         f'the bits per symbol of {scheme}, {scheme.bits_per_symbol}')
    return modulators[scheme].func(scheme, bits, sps)


def _transient(scheme: ModulationScheme) -> int:
    if scheme in (ModulationScheme.FSK2, ModulationScheme.OFDM256):
        return 0
    return rrc_taps(scheme.samples_per_symbol).size


def _num_bits(scheme: ModulationScheme) -> int:
    # enough symbols for one window plus the transients at both ends
    samples = WINDOW + 2 * _transient(scheme)
    if scheme is ModulationScheme.OFDM256:
        symbols = math.ceil(samples / (SUBCARRIERS + CYCLIC_PREFIX))
    else:
        symbols = math.ceil(samples / scheme.samples_per_symbol) + 1
    return symbols * scheme.bits_per_symbol


def random_datapoint(scheme: ModulationScheme, rng: np.random.Generator) -> IQDatapoint:
    """Modulate random bits and cut a window at a random offset.

    The offset is uniform over the positions that avoid the filter transients.
    """
    scheme = ModulationScheme(scheme)
    bits = rng.integers(0, 2, size=_num_bits(scheme), dtype=np.uint8)
    u = modulate(scheme, bits)
    skip = _transient(scheme)
    start = int(rng.integers(skip, u.size - skip - WINDOW + 1))
    return complex_to_2d(u[start:start+WINDOW], scheme.label)


def generate_dataset(spec: DatasetSpec) -> Dataset:
    """Generate a dataset.

    Every datapoint uses its own generator, derived from `spec.seed`, so the
    result only depends on `spec`.

    Args:
        spec: What to generate.

    Returns:
        The datapoints, ordered by class. The dataset-wide standard deviation
        is stored in :attr:`Dataset.std`.
    """
    n = spec.per_class_count
    x = np.empty((n * len(spec.schemes), 2, WINDOW), dtype=np.float32)
    labels = np.empty(n * len(spec.schemes), dtype=np.uint8)
    root = np.random.SeedSequence(spec.seed)
    for c, (scheme, child) in enumerate(zip(spec.schemes, root.spawn(len(spec.schemes)))):
        for j, item in enumerate(child.spawn(n)):
            dp = random_datapoint(scheme, np.random.default_rng(item))
            x[c*n + j] = dp.array
            labels[c*n + j] = dp.label
        logger.debug(f'generated {n} {scheme} datapoints')

    std = float(np.std(x, dtype=np.float64))
    logger.info(f'generated {labels.size} datapoints, std(X)={std:.4f}')
    return Dataset(x=x, labels=labels, std=std, meta={
        'seed': spec.seed,
        'per_class_count': n,
        'schemes': [s.value for s in spec.schemes],
    })
