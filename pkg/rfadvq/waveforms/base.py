"""
Base types and the modulator registry.
"""
import re
from dataclasses import dataclass
from enum import StrEnum
from typing import Callable
from typing import TypeVar

import numpy as np

from ..log import logger

ComplexSequence = np.ndarray
"""A 1-D :class:`numpy.ndarray` of complex128 baseband samples."""


class UnsupportedSchemeError(ValueError):
    """The requested operation is not defined for a modulation scheme."""


class DegenerateWindowError(ValueError):
    """A window of samples cannot be normalized (e.g., all samples are zero)."""


class ModulationScheme(StrEnum):
    """The six modulation classes. The definition order is the class-label order."""
    ASK4 = 'ASK4'
    PAM8 = 'PAM8'
    PSK16 = 'PSK16'
    QAM32X = 'QAM32X'
    FSK2 = 'FSK2'
    OFDM256 = 'OFDM256'

    @classmethod
    def _missing_(cls, value):
        s = re.sub(r'[^0-9A-Z]', '', str(value).upper())
        aliases = {
            'ASK4': cls.ASK4, '4ASK': cls.ASK4,
            'PAM8': cls.PAM8, '8PAM': cls.PAM8,
            'PSK16': cls.PSK16, '16PSK': cls.PSK16,
            'QAM32X': cls.QAM32X, '32QAMX': cls.QAM32X,
            '32QAMCROSS': cls.QAM32X, 'QAM32CROSS': cls.QAM32X,
            'FSK2': cls.FSK2, '2FSK': cls.FSK2,
            'OFDM256': cls.OFDM256, 'OFDM': cls.OFDM256,
        }
        return aliases.get(s)

    @classmethod
    def from_label(cls, label: int) -> 'ModulationScheme':
        """Return the scheme of a class label."""
        members = list(cls)
        if not 0 <= label < len(members):
            raise ValueError(f'Invalid class label {label}, must be in [0, {len(members)})')
        return members[label]

    @property
    def label(self) -> int:
        """The integer class label, in [0, 6)."""
        return list(ModulationScheme).index(self)

    @property
    def bits_per_symbol(self) -> int:
        """The number of bits that are mapped to one symbol.

        For OFDM256 a symbol is one OFDM symbol (256 subcarriers of 256-QAM).
        """
        return _BITS_PER_SYMBOL[self]

    @property
    def samples_per_symbol(self) -> int:
        """The sampling rate, in samples per symbol, that datapoints are created with."""
        return 8 if self is ModulationScheme.FSK2 else 2


_BITS_PER_SYMBOL = {
    ModulationScheme.ASK4: 2,
    ModulationScheme.PAM8: 3,
    ModulationScheme.PSK16: 4,
    ModulationScheme.QAM32X: 5,
    ModulationScheme.FSK2: 1,
    ModulationScheme.OFDM256: 256 * 8,
}

NUM_CLASSES: int = len(ModulationScheme)


@dataclass(frozen=True)
class Constellation:
    """The ideal symbol alphabet of a linear modulation.

    Args:
        points: The complex symbols, index i is the symbol for the
            bit group whose (MSB-first) integer value is i.
        bits_per_symbol: The number of bits per symbol, m_s.
    """
    points: np.ndarray
    bits_per_symbol: int

    def __post_init__(self) -> None:
        if self.points.size != 2 ** self.bits_per_symbol:
            raise ValueError(f'A constellation with {self.bits_per_symbol} bits/symbol '
                             f'must have {2 ** self.bits_per_symbol} points, '
                             f'got {self.points.size}')

    def __len__(self) -> int:
        return self.points.size

    @property
    def mean_power(self) -> float:
        """The mean power of the points."""
        return float(np.mean(np.abs(self.points) ** 2))


@dataclass(frozen=True)
class ModulatorInfo:
    func: Callable[[ModulationScheme, np.ndarray, int], ComplexSequence]
    schemes: tuple[ModulationScheme, ...]


Modulator = TypeVar('Modulator', bound=Callable[[ModulationScheme, np.ndarray, int], ComplexSequence])


def modulator(*schemes: ModulationScheme):
    """A decorator to register the function that modulates the specified schemes.

    The decorated function is called as ``func(scheme, bits, sps)`` and must
    return a :data:`ComplexSequence`.
    """
    def decorate(func: Modulator) -> Modulator:
        if not callable(func):
            raise TypeError(f'{func} is not callable')
        for s in schemes:
            modulators[s] = ModulatorInfo(func=func, schemes=schemes)
        names = ', '.join(s.value for s in schemes)
        logger.debug(f'added {func.__name__!r} to the modulator registry [{names}]')
        return func
    return decorate


def unpack_bits(bits: np.ndarray, bits_per_symbol: int) -> np.ndarray:
    """Group bits (MSB first) into integer symbol indices."""
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    if np.any(bits > 1):
        raise ValueError('The bit sequence may only contain 0 and 1')
    if bits.size % bits_per_symbol:
        raise ValueError(f'The number of bits, {bits.size}, is not divisible '
                         f'by the bits per symbol, {bits_per_symbol}')
    weights = 1 << np.arange(bits_per_symbol - 1, -1, -1, dtype=np.int64)
    return bits.reshape(-1, bits_per_symbol).astype(np.int64) @ weights


modulators: dict[ModulationScheme, ModulatorInfo] = {}
