"""
Layers and the layer registry.

Every layer works on a batch (the first axis) and caches what it needs
from the latest :meth:`Layer.forward` call for :meth:`Layer.backward`.
"""
from typing import Any
from typing import TypeVar

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..log import logger


class GraphStateError(RuntimeError):
    """Backward was requested without a matching forward pass."""


class Layer:

    kind: str = ''

    def __init__(self, dtype: type = np.float32) -> None:
        """Base class for all layers.

        Args:
            dtype: The floating-point type of the parameters.
        """
        self.dtype = np.dtype(dtype)
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache: Any = None

    def __repr__(self) -> str:
        args = ', '.join(f'{k}={v!r}' for k, v in self.config().items())
        return f'{self.__class__.__name__}({args})'

    def astype(self, dtype: type) -> None:
        """Convert the parameters to a different floating-point type."""
        self.dtype = np.dtype(dtype)
        for name, value in self.params.items():
            self.params[name] = value.astype(self.dtype)
        self.grads.clear()
        self._cache = None

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray, ...]:
        """Return the gradient w.r.t. each input and store the parameter gradients."""
        raise NotImplementedError

    def config(self) -> dict:
        """The keyword arguments that recreate this layer (without parameters)."""
        return {}

    def forward(self, *inputs: np.ndarray) -> np.ndarray:
        """Evaluate the layer."""
        raise NotImplementedError

    @property
    def num_inputs(self) -> int:
        """The number of inputs that :meth:`forward` expects."""
        return 1

    def _cached(self) -> Any:
        if self._cache is None:
            raise GraphStateError(f'{self!r}: backward was called before forward')
        return self._cache


def _init(rng: np.random.Generator | None, shape: tuple[int, ...], fan_in: int, dtype) -> np.ndarray:
    # He-normal initialization
    rng = rng or np.random.default_rng(0)
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


DecoratedLayer = TypeVar('DecoratedLayer', bound=Layer)


def layer(kind: str):
    """A decorator to register a Layer so that it can be recreated from a checkpoint.

    Args:
        kind: A unique name of the layer type.
    """
    def decorate(cls: type[DecoratedLayer]) -> type[DecoratedLayer]:
        if not issubclass(cls, Layer):
            raise TypeError(f'{cls} is not a subclass of {Layer}')
        if kind in layers:
            raise ValueError(f'A layer with kind {kind!r} is already registered')
        cls.kind = kind
        layers[kind] = cls
        logger.debug(f'added {cls.__name__!r} to the layer registry')
        return cls
    return decorate


layers: dict[str, type[Layer]] = {}


@layer('identity')
class Identity(Layer):

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._cache = True
        return x

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        self._cached()
        return grad,


@layer('conv1d')
class Conv1d(Layer):

    def __init__(self,
                 in_channels: int,
                 out_channels: int,
                 kernel: int,
                 *,
                 stride: int = 1,
                 padding: int = 0,
                 rng: np.random.Generator = None,
                 dtype: type = np.float32) -> None:
        """1-D convolution (cross-correlation) of (B, C, L) inputs.

        The output length is ``(L + 2*padding - kernel) // stride + 1``.
        """
        super().__init__(dtype=dtype)
        if kernel < 1 or stride < 1 or padding < 0:
            raise ValueError(f'Invalid convolution: kernel={kernel}, stride={stride}, padding={padding}')
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        self.params['weight'] = _init(rng, (out_channels, in_channels, kernel), in_channels * kernel, self.dtype)
        self.params['bias'] = np.zeros(out_channels, dtype=self.dtype)

    def config(self) -> dict:
        return {'in_channels': self.in_channels, 'out_channels': self.out_channels,
                'kernel': self.kernel, 'stride': self.stride, 'padding': self.padding}

    def forward(self, x: np.ndarray) -> np.ndarray:
        b, c, n = x.shape
        if c != self.in_channels:
            raise ValueError(f'{self!r} expects {self.in_channels} input channels, got {c}')
        p, k, s = self.padding, self.kernel, self.stride
        xp = np.pad(x, ((0, 0), (0, 0), (p, p))) if p else x
        if xp.shape[2] < k:
            raise ValueError(f'{self!r}: the input length {n} is shorter than the kernel')
        windows = sliding_window_view(xp, k, axis=2)[:, :, ::s, :]  # (B, C, Lout, k)
        n_out = windows.shape[2]
        cols = windows.transpose(0, 2, 1, 3).reshape(b * n_out, c * k)
        w = self.params['weight'].reshape(self.out_channels, c * k)
        out = (cols @ w.T).reshape(b, n_out, self.out_channels).transpose(0, 2, 1)
        self._cache = (cols, x.shape, n_out)
        return out + self.params['bias'][None, :, None]

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        cols, (b, c, n), n_out = self._cached()
        p, k, s = self.padding, self.kernel, self.stride
        g = grad.transpose(0, 2, 1).reshape(b * n_out, self.out_channels)
        w = self.params['weight'].reshape(self.out_channels, c * k)
        self.grads['weight'] = (g.T @ cols).reshape(self.params['weight'].shape)
        self.grads['bias'] = grad.sum(axis=(0, 2))
        dcols = (g @ w).reshape(b, n_out, c, k)
        dxp = np.zeros((b, c, n + 2 * p), dtype=grad.dtype)
        stop = s * (n_out - 1) + 1
        for j in range(k):
            dxp[:, :, j:j+stop:s] += dcols[:, :, :, j].transpose(0, 2, 1)
        return (dxp[:, :, p:p+n] if p else dxp),


@layer('conv_transpose1d')
class ConvTranspose1d(Layer):

    def __init__(self,
                 in_channels: int,
                 out_channels: int,
                 kernel: int,
                 *,
                 stride: int = 1,
                 padding: int = 0,
                 rng: np.random.Generator = None,
                 dtype: type = np.float32) -> None:
        """Transposed 1-D convolution, the adjoint of :class:`Conv1d`.

        The output length is ``(L - 1)*stride + kernel - 2*padding``.
        """
        super().__init__(dtype=dtype)
        if kernel < 1 or stride < 1 or padding < 0:
            raise ValueError(f'Invalid convolution: kernel={kernel}, stride={stride}, padding={padding}')
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        fan_in = in_channels * kernel // stride
        self.params['weight'] = _init(rng, (in_channels, out_channels, kernel), max(fan_in, 1), self.dtype)
        self.params['bias'] = np.zeros(out_channels, dtype=self.dtype)

    def config(self) -> dict:
        return {'in_channels': self.in_channels, 'out_channels': self.out_channels,
                'kernel': self.kernel, 'stride': self.stride, 'padding': self.padding}

    def forward(self, x: np.ndarray) -> np.ndarray:
        b, c, n = x.shape
        if c != self.in_channels:
            raise ValueError(f'{self!r} expects {self.in_channels} input channels, got {c}')
        o, k, s, p = self.out_channels, self.kernel, self.stride, self.padding
        x_cols = x.transpose(0, 2, 1).reshape(b * n, c)
        contrib = (x_cols @ self.params['weight'].reshape(c, o * k)).reshape(b, n, o, k)
        full = np.zeros((b, o, (n - 1) * s + k), dtype=contrib.dtype)
        stop = s * (n - 1) + 1
        for j in range(k):
            full[:, :, j:j+stop:s] += contrib[:, :, :, j].transpose(0, 2, 1)
        out = full[:, :, p:full.shape[2]-p] if p else full
        if out.shape[2] < 1:
            raise ValueError(f'{self!r}: the padding removes every output sample')
        self._cache = (x_cols, x.shape)
        return out + self.params['bias'][None, :, None]

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        x_cols, (b, c, n) = self._cached()
        o, k, s, p = self.out_channels, self.kernel, self.stride, self.padding
        g_full = np.pad(grad, ((0, 0), (0, 0), (p, p))) if p else grad
        windows = sliding_window_view(g_full, k, axis=2)[:, :, ::s, :]  # (B, O, L, k)
        g_cols = windows.transpose(0, 2, 1, 3).reshape(b * n, o * k)
        w = self.params['weight'].reshape(c, o * k)
        self.grads['weight'] = (x_cols.T @ g_cols).reshape(self.params['weight'].shape)
        self.grads['bias'] = grad.sum(axis=(0, 2))
        dx = (g_cols @ w.T).reshape(b, n, c).transpose(0, 2, 1)
        return dx,


@layer('dense')
class Dense(Layer):

    def __init__(self,
                 in_features: int,
                 out_features: int,
                 *,
                 rng: np.random.Generator = None,
                 dtype: type = np.float32) -> None:
        """Fully-connected layer of (B, in_features) inputs."""
        super().__init__(dtype=dtype)
        self.in_features = in_features
        self.out_features = out_features
        self.params['weight'] = _init(rng, (in_features, out_features), in_features, self.dtype)
        self.params['bias'] = np.zeros(out_features, dtype=self.dtype)

    def config(self) -> dict:
        return {'in_features': self.in_features, 'out_features': self.out_features}

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ValueError(f'{self!r} expects inputs of shape (B, {self.in_features}), got {x.shape}')
        self._cache = x
        return x @ self.params['weight'] + self.params['bias']

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        x = self._cached()
        self.grads['weight'] = x.T @ grad
        self.grads['bias'] = grad.sum(axis=0)
        return grad @ self.params['weight'].T,


@layer('relu')
class ReLU(Layer):

    def forward(self, x: np.ndarray) -> np.ndarray:
        mask = x > 0
        self._cache = mask
        return x * mask

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        return grad * self._cached(),


@layer('leaky_relu')
class LeakyReLU(Layer):

    def __init__(self, slope: float = 0.01, *, dtype: type = np.float32) -> None:
        super().__init__(dtype=dtype)
        self.slope = float(slope)

    def config(self) -> dict:
        return {'slope': self.slope}

    def forward(self, x: np.ndarray) -> np.ndarray:
        scale = np.where(x > 0, 1.0, self.slope).astype(x.dtype)
        self._cache = scale
        return x * scale

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        return grad * self._cached(),


@layer('global_avg_pool1d')
class GlobalAvgPool1d(Layer):
    """Average over the length axis, (B, C, L) -> (B, C)."""

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._cache = x.shape
        return x.mean(axis=2)

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        b, c, n = self._cached()
        return np.broadcast_to(grad[:, :, None] / n, (b, c, n)).copy(),


@layer('layer_norm1d')
class LayerNorm1d(Layer):

    def __init__(self, channels: int, *, eps: float = 1e-5, dtype: type = np.float32) -> None:
        """Normalize (B, C, L) activations over the channel axis at every position."""
        super().__init__(dtype=dtype)
        self.channels = channels
        self.eps = float(eps)
        self.params['gain'] = np.ones(channels, dtype=self.dtype)
        self.params['bias'] = np.zeros(channels, dtype=self.dtype)

    def config(self) -> dict:
        return {'channels': self.channels, 'eps': self.eps}

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[1] != self.channels:
            raise ValueError(f'{self!r} expects {self.channels} channels, got {x.shape[1]}')
        mean = x.mean(axis=1, keepdims=True)
        inv = 1.0 / np.sqrt(x.var(axis=1, keepdims=True) + self.eps)
        x_hat = (x - mean) * inv
        self._cache = (x_hat, inv)
        return self.params['gain'][None, :, None] * x_hat + self.params['bias'][None, :, None]

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        x_hat, inv = self._cached()
        self.grads['gain'] = (grad * x_hat).sum(axis=(0, 2))
        self.grads['bias'] = grad.sum(axis=(0, 2))
        d_hat = grad * self.params['gain'][None, :, None]
        c = self.channels
        dx = inv / c * (c * d_hat
                        - d_hat.sum(axis=1, keepdims=True)
                        - x_hat * (d_hat * x_hat).sum(axis=1, keepdims=True))
        return dx,


@layer('transpose')
class Transpose(Layer):

    def __init__(self, axes: tuple[int, ...] = (1, 0), *, dtype: type = np.float32) -> None:
        """Permute the per-sample axes, the batch axis stays first.

        Args:
            axes: The permutation of the per-sample axes, e.g., (1, 0)
                converts (B, C, L) to (B, L, C).
        """
        super().__init__(dtype=dtype)
        self.axes = tuple(int(a) for a in axes)
        if sorted(self.axes) != list(range(len(self.axes))):
            raise ValueError(f'Invalid permutation {axes}')

    def config(self) -> dict:
        return {'axes': list(self.axes)}

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._cache = True
        return x.transpose((0,) + tuple(a + 1 for a in self.axes))

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        self._cached()
        inverse = np.argsort(self.axes)
        return np.ascontiguousarray(grad.transpose((0,) + tuple(int(a) + 1 for a in inverse))),
