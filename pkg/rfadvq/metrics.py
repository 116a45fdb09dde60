"""
Metrics of attack impact and mitigation.
"""
import math
from dataclasses import dataclass
from dataclasses import field
from typing import TYPE_CHECKING

import numpy as np

from .log import logger
from .utils import ave_std
from .waveforms import NUM_CLASSES

if TYPE_CHECKING:
    from .vqvae import LatentCode
    from .vqvae import VQVAEModel


class DegenerateBaselineError(ZeroDivisionError):

    def __init__(self, report: 'LatentDistanceReport') -> None:
        """Two independent quantizations of the same datapoints never differ.

        Args:
            report: The raw (unnormalized) distances.
        """
        super().__init__(f'The attack-free baseline distance is zero after {report.trials} trials, '
                         f'the quantizer is effectively deterministic')
        self.report = report


def confusion_matrix(true: np.ndarray, predicted: np.ndarray, *, num_classes: int = NUM_CLASSES) -> np.ndarray:
    """Count (true, predicted) label pairs.

    Returns:
        Shape (num_classes, num_classes), rows are the true labels.
    """
    true = np.asarray(true, dtype=int).ravel()
    predicted = np.asarray(predicted, dtype=int).ravel()
    if true.shape != predicted.shape:
        raise ValueError(f'Shape mismatch {true.shape} != {predicted.shape}')
    for name, a in (('true', true), ('predicted', predicted)):
        if a.size and (a.min() < 0 or a.max() >= num_classes):
            raise ValueError(f'A {name} label must be in [0, {num_classes})')
    return np.bincount(true * num_classes + predicted,
                       minlength=num_classes * num_classes).reshape(num_classes, num_classes)


def accuracy(cm: np.ndarray) -> float:
    """The trace of a confusion matrix divided by its total."""
    total = cm.sum()
    if total == 0:
        raise ValueError('The confusion matrix is empty')
    return float(np.trace(cm) / total)


def class_accuracy(cm: np.ndarray) -> np.ndarray:
    """The accuracy of each class (row), NaN for a class without datapoints."""
    rows = cm.sum(axis=1)
    with np.errstate(invalid='ignore', divide='ignore'):
        return np.where(rows > 0, np.diag(cm) / rows, np.nan)


def attack_success_rates(labels: np.ndarray,
                         clean_predicted: np.ndarray,
                         attacked_predicted: np.ndarray,
                         *,
                         num_classes: int = NUM_CLASSES) -> np.ndarray:
    """The per-class fraction of correctly-classified datapoints that an attack made misclassified.

    Returns:
        Shape (num_classes,), NaN for a class without a correctly-classified datapoint.
    """
    labels = np.asarray(labels, dtype=int)
    correct = np.asarray(clean_predicted) == labels
    flipped = correct & (np.asarray(attacked_predicted) != labels)
    n_correct = np.bincount(labels[correct], minlength=num_classes)
    n_flipped = np.bincount(labels[flipped], minlength=num_classes)
    with np.errstate(invalid='ignore', divide='ignore'):
        return np.where(n_correct > 0, n_flipped / n_correct, np.nan)


def _indices(code: 'LatentCode | np.ndarray') -> np.ndarray:
    return np.asarray(getattr(code, 'indices', code))


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a, b = _indices(a), _indices(b)
    if a.shape != b.shape:
        raise ValueError(f'The latent codes have different lengths, {a.shape} != {b.shape}')
    return a, b


def _presence(indices: np.ndarray, size: int) -> np.ndarray:
    # boolean membership of every index, shape (..., size)
    flat = indices.reshape(-1, indices.shape[-1])
    out = np.zeros((flat.shape[0], size), dtype=bool)
    out[np.arange(flat.shape[0])[:, None], flat] = True
    return out.reshape(indices.shape[:-1] + (size,))


def hamming(a: 'LatentCode | np.ndarray', b: 'LatentCode | np.ndarray') -> int | np.ndarray:
    """The number of positions where the codeword indices differ.

    For codes of shape (N, 64) the result has shape (N,).
    """
    a, b = _pair(a, b)
    d = np.count_nonzero(a != b, axis=-1)
    return int(d) if np.ndim(d) == 0 else d


def set_distance_raw(a: 'LatentCode | np.ndarray', b: 'LatentCode | np.ndarray') -> int | np.ndarray:
    """The size of the symmetric difference of the two index sets."""
    a, b = _pair(a, b)
    if a.size == 0:
        return 0
    size = int(max(a.max(), b.max())) + 1
    d = np.count_nonzero(_presence(a, size) ^ _presence(b, size), axis=-1)
    return int(d) if np.ndim(d) == 0 else d


def set_difference(a: 'LatentCode | np.ndarray', b: 'LatentCode | np.ndarray') -> int | np.ndarray:
    """The number of indices in `a` that are not in `b`, ``|set(a) - set(b)|``."""
    a, b = _pair(a, b)
    if a.size == 0:
        return 0
    size = int(max(a.max(), b.max())) + 1
    d = np.count_nonzero(_presence(a, size) & ~_presence(b, size), axis=-1)
    return int(d) if np.ndim(d) == 0 else d


@dataclass(frozen=True)
class LatentDistanceReport:
    """Latent distances between clean and attacked datapoints.

    Args:
        raw_hamming: Mean Hamming distance between clean and attacked codes.
        raw_set: Mean symmetric set difference between clean and attacked codes.
        baseline_hamming: Mean Hamming distance between two quantizations of the clean datapoints.
        baseline_set: Mean symmetric set difference between two quantizations of the clean datapoints.
        normalized_hamming: ``raw_hamming / baseline_hamming`` (NaN if the baseline is zero).
        normalized_set: ``raw_set / baseline_set`` (NaN if the baseline is zero).
        trials: The number of quantizations that were averaged.
        raw_set_removed: Mean number of clean indices that the attacked code does not use.
        raw_set_added: Mean number of attacked indices that the clean code does not use.
        hamming_std: The standard error of `normalized_hamming` over the trials.
    """
    raw_hamming: float
    raw_set: float
    baseline_hamming: float
    baseline_set: float
    normalized_hamming: float
    normalized_set: float
    trials: int
    raw_set_removed: float = math.nan
    raw_set_added: float = math.nan
    hamming_std: float = math.nan

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def normalized_latent_distances(vqvae: 'VQVAEModel',
                                x: np.ndarray,
                                x_a: np.ndarray,
                                trials: int = 32,
                                rng: np.random.Generator = None,
                                *,
                                raise_on_degenerate: bool = True) -> LatentDistanceReport:
    """Latent distances between clean and attacked datapoints, normalized by the attack-free distance.

    Every trial draws three independent stochastic quantizations, two of
    `x` and one of `x_a`. The numerator is the distance between the first
    quantization of `x` and the quantization of `x_a` and the denominator
    is the distance between the two quantizations of `x`, both averaged
    over datapoints and trials.

    Args:
        vqvae: The model.
        x: The clean datapoint(s), shape (2, 1024) or (N, 2, 1024).
        x_a: The attacked datapoint(s), same shape as `x`.
        trials: The number of trials, at least 2.
        rng: The generator for the quantizations.
        raise_on_degenerate: Whether a zero baseline raises
            :exc:`DegenerateBaselineError`. If False the normalized
            values are NaN.

    Returns:
        The report.
    """
    if trials < 2:
        raise ValueError(f'At least 2 trials are required, got {trials}')
    x, x_a = np.asarray(x), np.asarray(x_a)
    if x.shape != x_a.shape:
        raise ValueError(f'Shape mismatch {x.shape} != {x_a.shape}')
    rng = rng or np.random.default_rng()

    # import here to avoid circular imports
    from .vqvae import posterior
    from .vqvae import sample_indices

    p = posterior(vqvae.encode(x).values, vqvae.codebook)
    p_a = posterior(vqvae.encode(x_a).values, vqvae.codebook)
    h, s, h0, s0, removed, added = (np.empty(trials) for _ in range(6))
    for t in range(trials):
        first = sample_indices(p, rng)
        second = sample_indices(p, rng)
        attacked = sample_indices(p_a, rng)
        h[t] = np.mean(hamming(first, attacked))
        s[t] = np.mean(set_distance_raw(first, attacked))
        h0[t] = np.mean(hamming(first, second))
        s0[t] = np.mean(set_distance_raw(first, second))
        removed[t] = np.mean(set_difference(first, attacked))
        added[t] = np.mean(set_difference(attacked, first))

    base_h, base_s = float(h0.mean()), float(s0.mean())
    norm_h = float(h.mean()) / base_h if base_h > 0 else math.nan
    norm_s = float(s.mean()) / base_s if base_s > 0 else math.nan
    spread = float(ave_std(h / base_h)[1]) / math.sqrt(trials) if base_h > 0 else math.nan
    report = LatentDistanceReport(
        raw_hamming=float(h.mean()), raw_set=float(s.mean()),
        baseline_hamming=base_h, baseline_set=base_s,
        normalized_hamming=norm_h, normalized_set=norm_s, trials=trials,
        raw_set_removed=float(removed.mean()), raw_set_added=float(added.mean()),
        hamming_std=spread)
    if base_h == 0 or base_s == 0:
        logger.warning(f'the attack-free latent distance is zero after {trials} trials')
        if raise_on_degenerate:
            raise DegenerateBaselineError(report)
    return report


@dataclass(frozen=True)
class CodewordHistogram:
    """How often every codeword index was used by a population of datapoints.

    Args:
        counts: One bin per codeword.
        descriptor: What the population is, e.g., the class, attack kind and epsilon.
        num_datapoints: The number of datapoints that were counted.
    """
    counts: np.ndarray
    descriptor: dict = field(default_factory=dict)
    num_datapoints: int = 0

    def __post_init__(self) -> None:
        if self.counts.sum() != 64 * self.num_datapoints:
            raise ValueError(f'The histogram total is {self.counts.sum()}, expected 64 x {self.num_datapoints}')

    @property
    def support(self) -> np.ndarray:
        """The indices of the codewords that were used."""
        return np.flatnonzero(self.counts)

    @property
    def total(self) -> int:
        """The number of tokens that were counted."""
        return int(self.counts.sum())


def histogram_from_tokens(tokens: np.ndarray, size: int = 128, **descriptor) -> CodewordHistogram:
    """Create a histogram from tokens of shape (N, 64)."""
    tokens = np.asarray(tokens)
    if tokens.size == 0:
        raise ValueError('Cannot create a histogram without tokens')
    if tokens.ndim != 2 or tokens.shape[1] != 64:
        raise ValueError(f'Expected tokens of shape (N, 64), got {tokens.shape}')
    counts = np.bincount(tokens.ravel().astype(np.int64), minlength=size)
    return CodewordHistogram(counts=counts, descriptor=descriptor, num_datapoints=tokens.shape[0])


def codeword_histogram(vqvae: 'VQVAEModel',
                       datapoints: np.ndarray,
                       rng: np.random.Generator = None,
                       *,
                       mode: str = 'stochastic',
                       **descriptor) -> CodewordHistogram:
    """Quantize datapoints and count the codeword indices.

    Args:
        vqvae: The model.
        datapoints: Shape (N, 2, 1024).
        rng: The generator for stochastic quantization.
        mode: The quantization mode.
        **descriptor: Describes the population (class, attack kind, epsilon, ...).
    """
    datapoints = np.asarray(datapoints)
    if datapoints.ndim == 2:
        datapoints = datapoints[None]
    if datapoints.shape[0] == 0:
        raise ValueError('Cannot create a histogram of an empty set of datapoints')
    tokens = vqvae.tokens(datapoints, rng, mode=mode)
    return histogram_from_tokens(tokens, vqvae.codebook.size, **descriptor)


def perplexity(counts: np.ndarray) -> float:
    """The exponential of the entropy of a usage histogram, NaN if it is empty."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        return math.nan
    p = counts[counts > 0] / total
    return float(np.exp(-np.sum(p * np.log(p))))


def snr_a(data_std: float, epsilon: float) -> float:
    """The attack signal-to-noise ratio, ``20*log10(std(X)/epsilon)``, in dB."""
    if data_std <= 0 or epsilon <= 0:
        raise ValueError(f'The standard deviation and epsilon must be > 0, got '
                         f'std={data_std}, epsilon={epsilon}')
    return 20.0 * math.log10(data_std / epsilon)
