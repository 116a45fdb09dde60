"""
Attack specification, adversarial datapoints and the attack registry.
"""
from __future__ import annotations

import math
import typing
from dataclasses import dataclass
from enum import StrEnum

import numpy as np

from ..log import logger
from ..waveforms import IQDatapoint

if typing.TYPE_CHECKING:
    from ..classifier import ClassifierModel


class AttackKind(StrEnum):
    """The attack method."""
    FGSM1 = 'FGSM1'
    FGSM2 = 'FGSM2'
    PGD = 'PGD'
    PGD1 = 'PGD1'

    @classmethod
    def _missing_(cls, value):
        s = str(value).upper().replace('-', '').replace('_', '').replace(' ', '')
        if s in ('FGSM1', 'FGSMPHASE', 'PHASEFGSM'):
            return cls.FGSM1
        if s in ('FGSM2', 'FGSM'):
            return cls.FGSM2
        if s in ('PGD', 'PGD2'):
            return cls.PGD
        if s in ('PGD1', 'PGDPHASE', 'PHASEPGD'):
            return cls.PGD1

    @property
    def iterative(self) -> bool:
        """Whether the attack takes more than one step."""
        return self in (AttackKind.PGD, AttackKind.PGD1)

    @property
    def phase_preserving(self) -> bool:
        """Whether the attack keeps the phase of every complex sample."""
        return self in (AttackKind.FGSM1, AttackKind.PGD1)


@dataclass(frozen=True)
class AttackSpec:
    """What attack to perform.

    Args:
        kind: The attack method.
        epsilon: The perturbation strength, in units of the peak-normalized samples.
        pgd_steps: The number of iterations of PGD.
        pgd_step_size: The step size of PGD. Default is epsilon/4.
        phase_preserving_pgd: Whether PGD re-projects onto the original
            phase of every sample after each step (same as kind PGD1).
        random_start: Whether PGD starts at a uniformly-random point in the
            epsilon ball instead of at the datapoint.
        seed: Seeds the random start.
    """
    kind: AttackKind
    epsilon: float
    pgd_steps: int = 10
    pgd_step_size: float | None = None
    phase_preserving_pgd: bool = False
    random_start: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, 'kind', AttackKind(self.kind))
        if not (self.epsilon >= 0 and math.isfinite(self.epsilon)):
            raise ValueError(f'epsilon must be >= 0, got {self.epsilon}')
        if self.pgd_steps < 1:
            raise ValueError(f'pgd_steps must be >= 1, got {self.pgd_steps}')
        if self.pgd_step_size is not None and self.pgd_step_size <= 0:
            raise ValueError(f'pgd_step_size must be > 0, got {self.pgd_step_size}')

    @property
    def phase_preserving(self) -> bool:
        """Whether the generated datapoints keep the phase of every sample."""
        return self.kind.phase_preserving or (self.kind is AttackKind.PGD and self.phase_preserving_pgd)

    @property
    def step_size(self) -> float:
        """The PGD step size, alpha."""
        return self.epsilon / 4.0 if self.pgd_step_size is None else self.pgd_step_size

    def as_dict(self) -> dict:
        """The specification as a JSON-serializable dict."""
        d = {'kind': self.kind.value, 'epsilon': self.epsilon, 'seed': self.seed}
        if self.kind.iterative:
            d.update(pgd_steps=self.pgd_steps, pgd_step_size=self.step_size,
                     phase_preserving=self.phase_preserving, random_start=self.random_start)
        return d

    @property
    def name(self) -> str:
        """A short name, e.g., ``FGSM2-0.1``."""
        return f'{self.kind.value}-{self.epsilon:g}'


@dataclass(frozen=True)
class AdversarialDatapoint:
    """A datapoint that was perturbed by an attack.

    Args:
        x_a: Shape (2, 1024).
        origin: The index of the clean datapoint in its dataset.
        spec: The attack.
        linf: The achieved L-infinity perturbation, ``max|x_a - x|``.
    """
    x_a: np.ndarray
    origin: int
    spec: AttackSpec
    linf: float


Generators = typing.Union[np.random.Generator, typing.Sequence[np.random.Generator]]

AttackFunction = typing.Callable[
    ['ClassifierModel', np.ndarray, np.ndarray, AttackSpec, Generators], np.ndarray]


@dataclass(frozen=True)
class AttackInfo:
    func: AttackFunction
    kinds: tuple[AttackKind, ...]


DecoratedAttack = typing.TypeVar('DecoratedAttack', bound=AttackFunction)


def attack(*kinds: AttackKind):
    """A decorator to register the function that performs an attack on a batch.

    The decorated function is called as ``func(model, x, y, spec, rng)``,
    where `x` has shape (N, 2, 1024), and must return the attacked batch.
    The `rng` is either one generator for the batch or one generator per
    datapoint.
    """
    def decorate(func: DecoratedAttack) -> DecoratedAttack:
        if not callable(func):
            raise TypeError(f'{func} is not callable')
        for k in kinds:
            attacks[AttackKind(k)] = AttackInfo(func=func, kinds=kinds)
        logger.debug(f'added {func.__name__!r} to the attacks registry')
        return func
    return decorate


attacks: dict[AttackKind, AttackInfo] = {}


def linf(x: np.ndarray, x_a: np.ndarray) -> np.ndarray:
    """The L-infinity distance of every datapoint in a batch, shape (N,)."""
    d = np.abs(x_a.astype(np.float64) - x.astype(np.float64))
    return d.reshape(d.shape[0], -1).max(axis=1)


def gradient(model: ClassifierModel, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """The gradient of each datapoint's loss w.r.t. its own samples, shape (N, 2, 1024)."""
    _, grad_i, grad_q = model.loss_and_input_grad(x, y)
    return np.stack((grad_i, grad_q), axis=1)


def uniform(rng: Generators, low: float, high: float, shape: tuple[int, ...]) -> np.ndarray:
    """Draw uniform noise for a batch of shape (N, ...).

    If `rng` is a sequence then row `n` is drawn from `rng[n]`, so a datapoint
    gets the same noise in any batch.
    """
    if isinstance(rng, np.random.Generator):
        return rng.uniform(low, high, size=shape)
    if len(rng) != shape[0]:
        raise ValueError(f'Expected {shape[0]} generators, got {len(rng)}')
    return np.stack([g.uniform(low, high, size=shape[1:]) for g in rng])


def attack_one(func: AttackFunction,
               model: ClassifierModel,
               x: IQDatapoint | np.ndarray,
               y: int,
               spec: AttackSpec,
               *,
               origin: int = 0,
               rng: np.random.Generator = None) -> AdversarialDatapoint:
    """Apply a batch attack function to a single datapoint.

    Args:
        func: A registered attack function.
        model: The classifier.
        x: The clean datapoint, shape (2, 1024).
        y: The true label of `x`.
        spec: The attack.
        origin: The index of `x` in its dataset.
        rng: The generator for a random start. Default is seeded with `spec.seed`.
    """
    if isinstance(x, IQDatapoint):
        x = x.array
    x = np.asarray(x)
    if x.ndim != 2:
        raise ValueError(f'Expected a single datapoint of shape (2, N), got {x.shape}')
    batch = x[None]
    x_a = func(model, batch, np.asarray([y]), spec, rng or np.random.default_rng(spec.seed))
    return AdversarialDatapoint(x_a=x_a[0], origin=origin, spec=spec, linf=float(linf(batch, x_a)[0]))
