"""
Projected gradient descent.
"""
from __future__ import annotations

import typing

import numpy as np

from ..waveforms import IQDatapoint
from .base import AdversarialDatapoint
from .base import AttackKind
from .base import AttackSpec
from .base import Generators
from .base import attack
from .base import attack_one
from .base import gradient
from .base import uniform
from .fgsm import along_phase
from .fgsm import amplitude
from .fgsm import sign_step

if typing.TYPE_CHECKING:
    from ..classifier import ClassifierModel


def project(x: np.ndarray,
            x_a: np.ndarray,
            epsilon: float,
            *,
            phase_preserving: bool = False,
            clean_amplitude: np.ndarray = None) -> np.ndarray:
    """Project an attacked batch back into the epsilon ball around `x` and into [-1, 1].

    Args:
        x: The clean batch, shape (N, 2, L).
        x_a: The attacked batch.
        epsilon: The radius of the L-infinity ball.
        phase_preserving: If True, the result keeps the phase of `x` and
            the magnitude of `x_a`, clipped to within epsilon of the clean
            magnitude and to at most 1.
        clean_amplitude: The magnitude of `x` (computed if not specified).

    Returns:
        The projected batch.
    """
    if phase_preserving:
        a = amplitude(x) if clean_amplitude is None else clean_amplitude
        new = np.clip(amplitude(x_a), np.maximum(a - epsilon, 0.0), np.minimum(a + epsilon, 1.0))
        return along_phase(x, new)
    return np.clip(np.clip(x_a, x - epsilon, x + epsilon), -1, 1)


@attack(AttackKind.PGD, AttackKind.PGD1)
def pgd_batch(model: ClassifierModel,
              x: np.ndarray,
              y: np.ndarray,
              spec: AttackSpec,
              rng: Generators = None) -> np.ndarray:
    """Iterate sign-gradient steps of size alpha, projecting after every step."""
    eps = spec.epsilon
    if eps == 0:
        return x.copy()
    phase = spec.phase_preserving
    a = amplitude(x) if phase else None
    x_a = x.copy()
    if spec.random_start:
        rng = rng or np.random.default_rng(spec.seed)
        x_a = project(x, x + uniform(rng, -eps, eps, x.shape).astype(x.dtype), eps,
                      phase_preserving=phase, clean_amplitude=a)
    for _ in range(spec.pgd_steps):
        stepped = sign_step(x_a, gradient(model, x_a, y), spec.step_size)
        x_a = project(x, stepped, eps, phase_preserving=phase, clean_amplitude=a)
    return x_a


def pgd(model: ClassifierModel,
        x: IQDatapoint | np.ndarray,
        y: int,
        epsilon: float,
        steps: int = 10,
        alpha: float = None,
        phase_preserving: bool = False,
        rng: np.random.Generator = None,
        *,
        random_start: bool = False,
        origin: int = 0) -> AdversarialDatapoint:
    """Attack one datapoint with PGD.

    Args:
        model: The classifier.
        x: The clean datapoint.
        y: The true label of `x`.
        epsilon: The radius of the L-infinity ball.
        steps: The number of iterations.
        alpha: The step size. Default is epsilon/4.
        phase_preserving: Whether every iteration keeps the phase of the
            clean samples (PGD1).
        rng: The generator for the random start.
        random_start: Whether to start at a random point in the ball.
        origin: The index of `x` in its dataset.
    """
    spec = AttackSpec(kind=AttackKind.PGD1 if phase_preserving else AttackKind.PGD,
                      epsilon=epsilon, pgd_steps=steps, pgd_step_size=alpha,
                      random_start=random_start)
    return attack_one(pgd_batch, model, x, y, spec, origin=origin, rng=rng)
