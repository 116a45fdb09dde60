"""
Linear (memoryless) modulations with root-raised-cosine pulse shaping.
"""
from functools import cache

import numpy as np
from scipy import signal

from .base import ComplexSequence
from .base import Constellation
from .base import ModulationScheme
from .base import UnsupportedSchemeError
from .base import modulator
from .base import unpack_bits

ROLLOFF: float = 0.35
SPAN: int = 8

# the RRC formula has a 0/0 singularity at |t| = 1/(4*rolloff)
_SINGULAR_TOLERANCE = 8 * np.finfo(float).eps


def _normalized(points: np.ndarray, bits_per_symbol: int) -> Constellation:
    points = points.astype(np.complex128)
    points /= np.sqrt(np.mean(np.abs(points) ** 2))
    points.setflags(write=False)
    return Constellation(points=points, bits_per_symbol=bits_per_symbol)


def _square_qam(order: int) -> np.ndarray:
    side = int(round(np.sqrt(order)))
    levels = np.arange(-(side - 1), side, 2)
    i, q = np.meshgrid(levels, levels[::-1])
    return (i + 1j * q).ravel()


@cache
def constellation(scheme: ModulationScheme) -> Constellation:
    """Return the unit-average-power constellation of a scheme.

    For :attr:`~ModulationScheme.OFDM256` the 256-QAM constellation
    that modulates each subcarrier is returned.

    Args:
        scheme: The modulation scheme.

    Returns:
        The constellation.

    Raises:
        UnsupportedSchemeError: If `scheme` is FSK2.
    """
    scheme = ModulationScheme(scheme)
    if scheme is ModulationScheme.ASK4:
        return _normalized(np.array([-3, -1, 1, 3]), 2)
    if scheme is ModulationScheme.PAM8:
        return _normalized(np.arange(8) - 3.5, 3)
    if scheme is ModulationScheme.PSK16:
        return _normalized(np.exp(2j * np.pi * np.arange(16) / 16), 4)
    if scheme is ModulationScheme.QAM32X:
        grid = _square_qam(36)
        corners = (np.abs(grid.real) == 5) & (np.abs(grid.imag) == 5)
        return _normalized(grid[~corners], 5)
    if scheme is ModulationScheme.OFDM256:
        return _normalized(_square_qam(256), 8)
    raise UnsupportedSchemeError(f'{scheme} does not have a static constellation')


@cache
def rrc_taps(sps: int, rolloff: float = ROLLOFF, span: int = SPAN) -> np.ndarray:
    """Root-raised-cosine filter taps with unit energy.

    Args:
        sps: Samples per symbol.
        rolloff: The excess-bandwidth factor, in [0, 1].
        span: The filter length, in symbols.

    Returns:
        The ``span*sps + 1`` filter taps.
    """
    if not 0 <= rolloff <= 1:
        raise ValueError(f'The rolloff must be in [0, 1], got {rolloff}')

    num_taps = span * sps + 1
    t = (np.arange(num_taps) - (num_taps - 1) / 2) / sps

    zero_mask = t == 0
    if rolloff > 0:
        special_mask = np.abs(np.abs(t) - 1 / (4 * rolloff)) < _SINGULAR_TOLERANCE
        special_value = rolloff / np.sqrt(2) * (
            (1 + 2 / np.pi) * np.sin(np.pi / (4 * rolloff)) +
            (1 - 2 / np.pi) * np.cos(np.pi / (4 * rolloff)))
    else:
        special_mask = np.zeros_like(zero_mask)
        special_value = 0.0
    general_mask = ~zero_mask & ~special_mask

    num = np.sin(np.pi * t * (1 - rolloff)) + 4 * rolloff * t * np.cos(np.pi * t * (1 + rolloff))
    den = np.pi * t * (1 - (4 * rolloff * t) ** 2)
    with np.errstate(divide='ignore', invalid='ignore'):
        general = num / den

    h = np.select(
        [zero_mask, special_mask, general_mask],
        [1 + rolloff * (4 / np.pi - 1), special_value, general])
    h /= np.sqrt(np.sum(h ** 2))
    h.setflags(write=False)
    return h


@modulator(ModulationScheme.ASK4, ModulationScheme.PAM8,
           ModulationScheme.PSK16, ModulationScheme.QAM32X)
def modulate_linear(scheme: ModulationScheme, bits: np.ndarray, sps: int) -> ComplexSequence:
    """Map bit groups to symbols, upsample by `sps` and apply the RRC filter.

    The output has ``(num_symbols - 1)*sps + len(taps)`` samples, the first
    and last ``len(taps)`` samples contain the filter transients.
    """
    c = constellation(scheme)
    symbols = c.points[unpack_bits(bits, c.bits_per_symbol)]
    # scale so that the steady-state output has (approximately) unit power
    taps = rrc_taps(sps) * np.sqrt(sps)
    return signal.upfirdn(taps, symbols, up=sps)
