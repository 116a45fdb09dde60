"""
A minimal reverse-mode differentiation engine for 1-D convolutional networks.
"""
from .gradcheck import BlockCheck
from .gradcheck import GradCheckReport
from .gradcheck import grad_check
from .gradcheck import half_squared_norm
from .gradcheck import numeric_gradient
from .gradcheck import relative_error
from .graph import Graph
from .graph import INPUT
from .graph import Node
from .graph import Tensor
from .layers import Conv1d
from .layers import ConvTranspose1d
from .layers import Dense
from .layers import GlobalAvgPool1d
from .layers import GraphStateError
from .layers import Identity
from .layers import Layer
from .layers import LayerNorm1d
from .layers import LeakyReLU
from .layers import ReLU
from .layers import Transpose
from .layers import layer
from .layers import layers
from .losses import mse
from .losses import softmax_cross_entropy
from .optim import OptState
from .optim import optimizer_step
