"""
Synthesis of baseband waveforms and labeled I/Q datasets.
"""
from .base import ComplexSequence
from .base import Constellation
from .base import DegenerateWindowError
from .base import ModulationScheme
from .base import NUM_CLASSES
from .base import UnsupportedSchemeError
from .base import modulator
from .base import modulators
from .dataset import Dataset
from .dataset import DatasetSpec
from .dataset import IQDatapoint
from .dataset import WINDOW
from .dataset import complex_to_2d
from .dataset import generate_dataset
from .dataset import modulate
from .dataset import random_datapoint
from .dataset import recombine
from .fsk import modulate_fsk
from .linear import constellation
from .linear import modulate_linear
from .linear import rrc_taps
from .ofdm import modulate_ofdm
