"""
Fast gradient sign method, per channel (FGSM2) and phase preserving (FGSM1).
"""
from __future__ import annotations

import typing

import numpy as np

from ..log import logger
from ..waveforms import IQDatapoint
from .base import AdversarialDatapoint
from .base import AttackKind
from .base import AttackSpec
from .base import Generators
from .base import attack
from .base import attack_one
from .base import gradient

if typing.TYPE_CHECKING:
    from ..classifier import ClassifierModel


def sign_step(x: np.ndarray, grad: np.ndarray, epsilon: float) -> np.ndarray:
    """Return ``x + epsilon * sign(grad)`` in the data type of `x`, where sign(0) is 0."""
    return x + epsilon * np.sign(grad).astype(x.dtype)


def amplitude(x: np.ndarray) -> np.ndarray:
    """The magnitude of every complex sample of a (N, 2, L) batch, shape (N, L), in float64."""
    return np.hypot(x[:, 0].astype(np.float64), x[:, 1].astype(np.float64))


def along_phase(x: np.ndarray, new_amplitude: np.ndarray) -> np.ndarray:
    """Replace the magnitude of every sample of `x` while keeping its phase.

    A sample of `x` that is exactly zero has no phase and is returned unchanged.

    Args:
        x: A batch, shape (N, 2, L).
        new_amplitude: The magnitudes, shape (N, L).

    Returns:
        A batch in the data type of `x`.
    """
    x64 = x.astype(np.float64)
    phase = np.arctan2(x64[:, 1], x64[:, 0])
    out = np.stack((new_amplitude * np.cos(phase), new_amplitude * np.sin(phase)), axis=1)
    zero = (x64[:, 0] == 0) & (x64[:, 1] == 0)
    if np.any(zero):
        logger.warning(f'{np.count_nonzero(zero)} zero-amplitude samples have no phase, '
                       f'they are not perturbed')
        out = np.where(zero[:, None, :], x64, out)
    return out.astype(x.dtype)


@attack(AttackKind.FGSM2)
def fgsm2_batch(model: ClassifierModel,
                x: np.ndarray,
                y: np.ndarray,
                spec: AttackSpec,
                rng: Generators = None) -> np.ndarray:
    """Perturb the I and Q channels independently along the sign of the loss gradient."""
    if spec.epsilon == 0:
        return x.copy()
    return sign_step(x, gradient(model, x, y), spec.epsilon)


@attack(AttackKind.FGSM1)
def fgsm1_batch(model: ClassifierModel,
                x: np.ndarray,
                y: np.ndarray,
                spec: AttackSpec,
                rng: Generators = None) -> np.ndarray:
    """Take the magnitude of the FGSM2 result and restore the original phase of every sample."""
    if spec.epsilon == 0:
        return x.copy()
    stepped = sign_step(x, gradient(model, x, y), spec.epsilon)
    return along_phase(x, amplitude(stepped))


def fgsm2(model: ClassifierModel,
          x: IQDatapoint | np.ndarray,
          y: int,
          epsilon: float,
          *,
          origin: int = 0) -> AdversarialDatapoint:
    """Attack one datapoint with FGSM2.

    ``I_a = I + epsilon*sign(dJ/dI)`` and ``Q_a = Q + epsilon*sign(dJ/dQ)``.
    """
    spec = AttackSpec(kind=AttackKind.FGSM2, epsilon=epsilon)
    return attack_one(fgsm2_batch, model, x, y, spec, origin=origin)


def fgsm1(model: ClassifierModel,
          x: IQDatapoint | np.ndarray,
          y: int,
          epsilon: float,
          *,
          origin: int = 0) -> AdversarialDatapoint:
    """Attack one datapoint with FGSM1.

    The FGSM2-perturbed sample (I', Q') gives the amplitude
    ``A_a = sqrt(I'^2 + Q'^2)`` and the result is ``(A_a cos(w), A_a sin(w))``
    where ``w = atan2(Q, I)`` is the phase of the clean sample. Because the
    change is radial, the L-infinity perturbation is at most ``sqrt(2)*epsilon``.
    """
    spec = AttackSpec(kind=AttackKind.FGSM1, epsilon=epsilon)
    return attack_one(fgsm1_batch, model, x, y, spec, origin=origin)
