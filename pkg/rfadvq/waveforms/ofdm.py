"""
OFDM with 256 subcarriers, each carrying a 256-QAM symbol.
"""
import numpy as np
from scipy import fft

from .base import ComplexSequence
from .base import ModulationScheme
from .base import modulator
from .base import unpack_bits
from .linear import constellation

SUBCARRIERS: int = 256
CYCLIC_PREFIX: int = 64


@modulator(ModulationScheme.OFDM256)
def modulate_ofdm(scheme: ModulationScheme,
                  bits: np.ndarray,
                  sps: int,
                  *,
                  cyclic_prefix: int = CYCLIC_PREFIX) -> ComplexSequence:
    """Modulate OFDM symbols.

    Every 2048 bits are mapped to 256 subcarriers (8 bits each, 256-QAM),
    transformed with a unit-power inverse DFT and the last `cyclic_prefix`
    samples are prepended. The subcarriers fill the sampled band so `sps`
    does not resample the output.
    """
    qam = constellation(ModulationScheme.OFDM256)
    indices = unpack_bits(bits, qam.bits_per_symbol)
    if indices.size % SUBCARRIERS:
        raise ValueError(f'The number of bits must be a multiple of '
                         f'{SUBCARRIERS * qam.bits_per_symbol} for OFDM')
    grid = qam.points[indices].reshape(-1, SUBCARRIERS)
    time = fft.ifft(grid, axis=1, norm='ortho')
    if cyclic_prefix:
        time = np.concatenate((time[:, -cyclic_prefix:], time), axis=1)
    return time.ravel()
