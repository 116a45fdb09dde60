"""
Continuous-phase binary frequency-shift keying.
"""
import numpy as np

from .base import ComplexSequence
from .base import ModulationScheme
from .base import modulator
from .base import unpack_bits

MODULATION_INDEX: float = 0.5


@modulator(ModulationScheme.FSK2)
def modulate_fsk(scheme: ModulationScheme,
                 bits: np.ndarray,
                 sps: int,
                 *,
                 h: float = MODULATION_INDEX) -> ComplexSequence:
    """Binary CPFSK with a constant (unit) envelope.

    Each bit selects a frequency deviation of +h/2 or -h/2 cycles per
    symbol and the phase is accumulated across symbol boundaries.
    """
    symbols = 2 * unpack_bits(bits, 1) - 1
    increments = np.repeat(np.pi * h * symbols / sps, sps)
    phase = np.concatenate(([0.0], np.cumsum(increments)[:-1]))
    return np.exp(1j * phase)
