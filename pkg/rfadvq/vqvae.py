"""
Vector-quantized variational autoencoder with stochastic quantization.

A (2, 1024) datapoint is encoded to 64 slices of length 512, every slice is
replaced by a codeword that is sampled from the posterior over a codebook
and the decoder maps the 64 codewords back to a (2, 1024) reconstruction.
"""
import math
import re
import threading
import time
from dataclasses import asdict
from dataclasses import dataclass
from enum import StrEnum

import numpy as np
from scipy.special import log_softmax
from scipy.special import softmax

from . import io
from .log import logger
from .metrics import perplexity
from .neuralcore import Conv1d
from .neuralcore import ConvTranspose1d
from .neuralcore import Graph
from .neuralcore import LayerNorm1d
from .neuralcore import OptState
from .neuralcore import ReLU
from .neuralcore import Transpose
from .neuralcore import optimizer_step
from .utils import batches
from .utils import derive_seeds
from .utils import hhmmss
from .waveforms import Dataset
from .waveforms import IQDatapoint
from .waveforms import WINDOW

NUM_SLICES: int = 64
CODEWORD_LENGTH: int = 512
CODEBOOK_SIZE: int = 128


class DivergenceError(RuntimeError):

    def __init__(self, epoch: int, step: int, terms: dict[str, float]) -> None:
        """A loss term became non-finite while training.

        Args:
            epoch: The epoch number (1-based).
            step: The optimizer step within the epoch (1-based).
            terms: The value of every loss term.
        """
        values = ', '.join(f'{k}={v}' for k, v in terms.items())
        super().__init__(f'Training diverged at epoch {epoch}, step {step} [{values}]')
        self.epoch = epoch
        self.step = step
        self.terms = terms


class QuantizeMode(StrEnum):
    """How a latent slice is mapped to a codeword."""
    STOCHASTIC = 'stochastic'
    ARGMAX = 'argmax'

    @classmethod
    def _missing_(cls, value):
        s = re.sub(r'[^a-z]', '', str(value).lower())
        if s in ('sample', 'sampling', 'random', 'omegasc'):
            return cls.STOCHASTIC
        if s in ('mode', 'nearest', 'deterministic', 'max'):
            return cls.ARGMAX


@dataclass(frozen=True)
class VQVAEHyper:
    """Hyperparameters to train the VQVAE.

    Args:
        epochs: The number of passes over the training data.
        batch_size: The number of datapoints per optimizer step.
        lr: The learning rate.
        beta: The weight of the commitment and KL terms.
        reset_fraction: A codeword whose usage in an epoch is below this
            fraction of the usage that a uniform posterior would give is reset.
        codebook_size: The number of codewords.
        seed: Seeds the initial weights, the sampling and the shuffling.
    """
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    beta: float = 0.25
    reset_fraction: float = 0.01
    codebook_size: int = CODEBOOK_SIZE
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ('epochs', 'batch_size', 'lr', 'codebook_size'):
            if getattr(self, name) <= 0:
                raise ValueError(f'{name} must be > 0, got {getattr(self, name)}')
        if self.beta < 0:
            raise ValueError(f'beta must be >= 0, got {self.beta}')
        if not 0 <= self.reset_fraction < 1:
            raise ValueError(f'reset_fraction must be in [0, 1), got {self.reset_fraction}')


@dataclass
class Codebook:
    """The codewords and how often each was selected in the current epoch.

    Args:
        entries: Shape (q_s, 512).
        usage: Shape (q_s,).
    """
    entries: np.ndarray
    usage: np.ndarray = None

    def __post_init__(self) -> None:
        self.entries = np.asarray(self.entries)
        if self.entries.ndim != 2 or self.entries.shape[1] != CODEWORD_LENGTH:
            raise ValueError(f'The codebook must have shape (q_s, {CODEWORD_LENGTH}), '
                             f'got {self.entries.shape}')
        if not np.all(np.isfinite(self.entries)):
            raise ValueError('Every codebook entry must be finite')
        if self.usage is None:
            self.usage = np.zeros(self.size, dtype=np.int64)

    def __len__(self) -> int:
        return self.size

    @property
    def size(self) -> int:
        """The number of codewords, q_s."""
        return self.entries.shape[0]

    def lookup(self, indices: np.ndarray) -> np.ndarray:
        """Return the codewords at `indices`, shape ``indices.shape + (512,)``."""
        return self.entries[indices]


@dataclass(frozen=True)
class LatentGrid:
    """The encoder output, shape (64, 512) or (N, 64, 512) for a batch."""
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.shape[-2:] != (NUM_SLICES, CODEWORD_LENGTH) or self.values.ndim not in (2, 3):
            raise ValueError(f'A latent grid must have shape ([N,] {NUM_SLICES}, {CODEWORD_LENGTH}), '
                             f'got {self.values.shape}')


@dataclass(frozen=True)
class LatentCode:
    """The codeword indices, shape (64,) or (N, 64), and the codewords.

    Indices are 0-based, in [0, q_s).
    """
    indices: np.ndarray
    vectors: np.ndarray

    def __post_init__(self) -> None:
        if self.indices.shape[-1:] != (NUM_SLICES,) or self.indices.ndim not in (1, 2):
            raise ValueError(f'A latent code must have shape ([N,] {NUM_SLICES}), got {self.indices.shape}')
        if self.vectors.shape != self.indices.shape + (CODEWORD_LENGTH,):
            raise ValueError(f'Expected codewords of shape {self.indices.shape + (CODEWORD_LENGTH,)}, '
                             f'got {self.vectors.shape}')

    def __len__(self) -> int:
        return self.indices.shape[-1]


@dataclass
class VQVAELoss:
    """The value of every term of the training loss."""
    total: float
    reconstruction: float
    quantization: float
    commitment: float
    kl: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def squared_distances(z: np.ndarray, entries: np.ndarray) -> np.ndarray:
    """Return ‖z - e_k‖² for every slice of `z` and every codeword, in float64."""
    z = np.asarray(z, dtype=np.float64)
    e = np.asarray(entries, dtype=np.float64)
    d = np.sum(z * z, axis=-1, keepdims=True) - 2.0 * (z @ e.T) + np.sum(e * e, axis=1)
    return np.maximum(d, 0.0)


def _entries(codebook: Codebook | np.ndarray) -> np.ndarray:
    return codebook.entries if isinstance(codebook, Codebook) else np.asarray(codebook)


def posterior(z: np.ndarray, codebook: Codebook | np.ndarray) -> np.ndarray:
    """The probability of every codeword, ``p_k ∝ exp(-‖z - e_k‖²)``.

    Args:
        z: One slice, shape (512,), or any array of slices, shape (..., 512).
        codebook: The codebook.

    Returns:
        The probabilities, shape (..., q_s). They are normalized in the log
        domain, so every row sums to 1 even for extreme distances.
    """
    p = softmax(-squared_distances(z, _entries(codebook)), axis=-1)
    return p / p.sum(axis=-1, keepdims=True)


def sample_indices(p: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one index per row of probabilities `p`, shape (..., q_s)."""
    cdf = np.cumsum(p, axis=-1)
    u = rng.random(p.shape[:-1]) * cdf[..., -1]
    return np.sum(cdf <= u[..., None], axis=-1)


def quantize(grid: LatentGrid | np.ndarray,
             codebook: Codebook,
             mode: QuantizeMode | str = QuantizeMode.STOCHASTIC,
             rng: np.random.Generator = None) -> LatentCode:
    """Map every latent slice to a codeword.

    Args:
        grid: The encoder output.
        codebook: The codebook.
        mode: Sample from the posterior (stochastic) or take its mode (argmax).
        rng: The generator for stochastic mode.

    Returns:
        The latent code.
    """
    z = grid.values if isinstance(grid, LatentGrid) else np.asarray(grid)
    mode = QuantizeMode(mode)
    if mode is QuantizeMode.ARGMAX:
        indices = np.argmin(squared_distances(z, codebook.entries), axis=-1)
    else:
        if rng is None:
            raise ValueError('Stochastic quantization requires a random-number generator')
        indices = sample_indices(posterior(z, codebook), rng)
    return LatentCode(indices=indices, vectors=codebook.lookup(indices))


def kl_uniform(p: np.ndarray, log_p: np.ndarray = None) -> np.ndarray:
    """KL divergence of each row of `p` from the uniform distribution."""
    if log_p is None:
        with np.errstate(divide='ignore'):
            log_p = np.log(p)
    plogp = np.where(p > 0, p * log_p, 0.0)
    return np.sum(plogp, axis=-1) + math.log(p.shape[-1])


def build_encoder(*, rng: np.random.Generator = None, dtype: type = np.float32) -> Graph:
    """(2, 1024) -> (64, 512)."""
    g = Graph((2, WINDOW), dtype=dtype)
    g.add('conv1', Conv1d(2, 64, 8, stride=4, padding=2, rng=rng))
    g.add('relu1', ReLU())
    g.add('conv2', Conv1d(64, 128, 8, stride=4, padding=2, rng=rng))
    g.add('relu2', ReLU())
    g.add('norm', LayerNorm1d(128))
    g.add('project', Conv1d(128, CODEWORD_LENGTH, 1, rng=rng))
    g.add('slices', Transpose((1, 0)))
    return g


def build_decoder(*, rng: np.random.Generator = None, dtype: type = np.float32) -> Graph:
    """(64, 512) -> (2, 1024)."""
    g = Graph((NUM_SLICES, CODEWORD_LENGTH), dtype=dtype)
    g.add('channels', Transpose((1, 0)))
    g.add('project', Conv1d(CODEWORD_LENGTH, 128, 1, rng=rng))
    g.add('relu1', ReLU())
    g.add('up1', ConvTranspose1d(128, 64, 4, stride=4, rng=rng))
    g.add('relu2', ReLU())
    g.add('up2', ConvTranspose1d(64, 2, 4, stride=4, rng=rng))
    return g


def _as_batch(x: IQDatapoint | np.ndarray) -> tuple[np.ndarray, bool]:
    if isinstance(x, IQDatapoint):
        x = x.array
    x = np.asarray(x)
    if x.shape == (2, WINDOW):
        return x[None], True
    if x.ndim != 3 or x.shape[1:] != (2, WINDOW):
        raise ValueError(f'Expected a datapoint of shape (2, {WINDOW}) or a batch of '
                         f'shape (N, 2, {WINDOW}), got {x.shape}')
    return x, False


class VQVAEModel:

    def __init__(self,
                 encoder: Graph,
                 codebook: Codebook,
                 decoder: Graph,
                 *,
                 beta: float = 0.25,
                 metadata: dict = None) -> None:
        """The encoder, codebook and decoder.

        Args:
            encoder: Maps (2, 1024) to (64, 512).
            codebook: The codewords.
            decoder: Maps (64, 512) to (2, 1024).
            beta: The weight of the commitment and KL terms.
            metadata: Information about how the model was trained.
        """
        if decoder.input_shape != (NUM_SLICES, CODEWORD_LENGTH):
            raise ValueError(f'The decoder input shape must be ({NUM_SLICES}, {CODEWORD_LENGTH}), '
                             f'got {decoder.input_shape}')
        if encoder.input_shape != (2, WINDOW):
            raise ValueError(f'The encoder input shape must be (2, {WINDOW}), got {encoder.input_shape}')
        self.encoder = encoder
        self.codebook = codebook
        self.decoder = decoder
        self.beta = float(beta)
        self.metadata = dict(metadata or {})
        self._lock = threading.Lock()

    def __repr__(self) -> str:
        return f'<VQVAEModel codebook={self.codebook.size}x{CODEWORD_LENGTH} beta={self.beta}>'

    def astype(self, dtype: type) -> 'VQVAEModel':
        """Return a copy of the model with a different floating-point type."""
        return VQVAEModel(self.encoder.astype(dtype),
                          Codebook(self.codebook.entries.astype(dtype)),
                          self.decoder.astype(dtype),
                          beta=self.beta, metadata=self.metadata)

    def decode(self, code: LatentCode | np.ndarray, *, batch_size: int = 64) -> np.ndarray:
        """Reconstruct the datapoint(s) from a latent code (or from codewords of shape ([N,] 64, 512))."""
        z = code.vectors if isinstance(code, LatentCode) else np.asarray(code)
        single = z.ndim == 2
        z = z[None] if single else z
        if z.shape[1:] != (NUM_SLICES, CODEWORD_LENGTH):
            raise ValueError(f'Expected codewords of shape ([N,] {NUM_SLICES}, {CODEWORD_LENGTH}), '
                             f'got {z.shape}')
        out = np.empty((z.shape[0], 2, WINDOW), dtype=self.decoder.dtype)
        with self._lock:
            for idx in batches(z.shape[0], batch_size):
                out[idx] = self.decoder.forward(z[idx])
        return out[0] if single else out

    def encode(self, x: IQDatapoint | np.ndarray, *, batch_size: int = 64) -> LatentGrid:
        """Encode a datapoint, or a batch of datapoints."""
        batch, single = _as_batch(x)
        out = np.empty((batch.shape[0], NUM_SLICES, CODEWORD_LENGTH), dtype=self.encoder.dtype)
        with self._lock:
            for idx in batches(batch.shape[0], batch_size):
                out[idx] = self.encoder.forward(batch[idx])
        return LatentGrid(out[0] if single else out)

    def load_parameters(self, params: dict[str, np.ndarray]) -> None:
        """Replace parameter values, keyed as returned by :meth:`parameters`."""
        enc = {k[8:]: v for k, v in params.items() if k.startswith('encoder.')}
        dec = {k[8:]: v for k, v in params.items() if k.startswith('decoder.')}
        self.encoder.load_parameters(enc)
        self.decoder.load_parameters(dec)
        if 'codebook' in params:
            entries = params['codebook']
            if entries.shape != self.codebook.entries.shape:
                raise ValueError(f'The codebook has shape {self.codebook.entries.shape}, got {entries.shape}')
            self.codebook.entries = np.array(entries, dtype=self.encoder.dtype)

    def loss_and_grads(self,
                       x: np.ndarray,
                       *,
                       indices: np.ndarray = None,
                       rng: np.random.Generator = None,
                       straight_through: bool = True) -> tuple[VQVAELoss, dict[str, np.ndarray], np.ndarray, np.ndarray]:
        """Evaluate the training loss and its gradients.

        The loss is ``L_rec + L_quant + beta * (L_commit + KL)``, where L_rec
        is the mean squared reconstruction error, L_quant pulls the selected
        codewords towards the (fixed) encoder output, L_commit pulls the
        encoder output towards the (fixed) codewords and KL is the mean
        divergence of the posterior from the uniform prior.

        Args:
            x: A batch, shape (N, 2, 1024).
            indices: The codeword indices, shape (N, 64). If not specified
                then they are sampled with `rng`, or the posterior mode is
                used if `rng` is also not specified.
            rng: The generator to sample the indices.
            straight_through: If True, the gradient that reaches the
                decoder input is copied to the encoder output. If False,
                it is the exact gradient w.r.t. the selected codewords
                (with `indices` held fixed).

        Returns:
            The loss terms, the parameter gradients (keyed as
            :meth:`parameters`), the gradient w.r.t. `x` and the indices.
        """
        x, _ = _as_batch(x)
        x = x.astype(self.encoder.dtype, copy=False)
        entries = self.codebook.entries
        k = entries.shape[0]

        z = self.encoder.forward(x)
        logits = -squared_distances(z, entries)
        log_p = log_softmax(logits, axis=-1)
        p = np.exp(log_p)
        if indices is None:
            if rng is None:
                indices = np.argmax(logits, axis=-1)
            else:
                indices = sample_indices(p, rng)
        indices = np.asarray(indices)
        if indices.shape != z.shape[:2]:
            raise ValueError(f'Expected indices of shape {z.shape[:2]}, got {indices.shape}')
        zq = entries[indices]
        x_hat = self.decoder.forward(zq)

        diff_rec = x_hat - x
        diff_q = zq - z
        n_rec, n_q, n_slices = diff_rec.size, diff_q.size, indices.size
        kl = kl_uniform(p, log_p)
        loss = VQVAELoss(total=0.0,
                         reconstruction=float(np.mean(diff_rec ** 2)),
                         quantization=float(np.mean(diff_q ** 2)),
                         commitment=float(np.mean(diff_q ** 2)),
                         kl=float(np.mean(kl)))
        loss.total = loss.reconstruction + loss.quantization + self.beta * (loss.commitment + loss.kl)

        dec_grads, g_zq = self.decoder.backward((2.0 / n_rec) * diff_rec)
        g_entries = np.zeros((k, CODEWORD_LENGTH), dtype=np.float64)
        g_zq_total = (2.0 / n_q) * diff_q
        if not straight_through:
            g_zq_total = g_zq_total + g_zq
        np.add.at(g_entries, indices.ravel(), g_zq_total.reshape(-1, CODEWORD_LENGTH))

        g_z = (self.beta * 2.0 / n_q) * (z - zq)
        if straight_through:
            g_z = g_z + g_zq

        # d(KL)/d(logits), then through logits_k = -‖z - e_k‖²
        plogp = np.where(p > 0, p * log_p, 0.0)
        g_logits = (self.beta / n_slices) * (plogp - p * np.sum(plogp, axis=-1, keepdims=True))
        z64 = z.astype(np.float64)
        g_z = g_z - 2.0 * (z64 * np.sum(g_logits, axis=-1, keepdims=True) - g_logits @ entries)
        flat_g = g_logits.reshape(-1, k)
        g_entries += 2.0 * (flat_g.T @ z64.reshape(-1, CODEWORD_LENGTH)
                            - np.sum(flat_g, axis=0)[:, None] * entries)

        enc_grads, input_grad = self.encoder.backward(g_z.astype(self.encoder.dtype))
        grads = {f'encoder.{n}': v for n, v in enc_grads.items()}
        grads.update({f'decoder.{n}': v for n, v in dec_grads.items()})
        grads['codebook'] = g_entries.astype(entries.dtype)
        return loss, grads, input_grad, indices

    def parameters(self) -> dict[str, np.ndarray]:
        """Every trainable block, keyed by ``'encoder.<node>.<param>'``,
        ``'decoder.<node>.<param>'`` and ``'codebook'``."""
        params = {f'encoder.{k}': v for k, v in self.encoder.parameters().items()}
        params.update({f'decoder.{k}': v for k, v in self.decoder.parameters().items()})
        params['codebook'] = self.codebook.entries
        return params

    def posterior(self, z: np.ndarray) -> np.ndarray:
        """See :func:`posterior`."""
        return posterior(z, self.codebook)

    def quantize(self,
                 grid: LatentGrid | np.ndarray,
                 mode: QuantizeMode | str = QuantizeMode.STOCHASTIC,
                 rng: np.random.Generator = None) -> LatentCode:
        """See :func:`quantize`."""
        return quantize(grid, self.codebook, mode=mode, rng=rng)

    def reconstruct(self,
                    x: IQDatapoint | np.ndarray,
                    rng: np.random.Generator = None,
                    *,
                    mode: QuantizeMode | str = QuantizeMode.STOCHASTIC) -> tuple[np.ndarray, LatentCode]:
        """Encode, quantize and decode.

        Returns:
            The reconstruction and the latent code.
        """
        code = self.quantize(self.encode(x), mode=mode, rng=rng)
        return self.decode(code), code

    def tokens(self,
               x: IQDatapoint | np.ndarray,
               rng: np.random.Generator = None,
               *,
               mode: QuantizeMode | str = QuantizeMode.STOCHASTIC) -> np.ndarray:
        """Return only the codeword indices of the datapoint(s)."""
        return self.quantize(self.encode(x), mode=mode, rng=rng).indices

    @classmethod
    def load(cls, file: str) -> 'VQVAEModel':
        """Load a model that was saved by :meth:`save`."""
        graphs, arrays, metadata = io.load_checkpoint(file)
        for name in ('encoder', 'decoder'):
            if name not in graphs:
                raise io.FormatError(f'{file!r} does not contain a {name!r} graph')
        if 'codebook' not in arrays:
            raise io.FormatError(f'{file!r} does not contain a codebook block')
        encoder = Graph.from_descriptors(tuple(graphs['encoder']['input_shape']), graphs['encoder']['nodes'])
        decoder = Graph.from_descriptors(tuple(graphs['decoder']['input_shape']), graphs['decoder']['nodes'])
        model = cls(encoder, Codebook(arrays['codebook']), decoder,
                    beta=metadata.pop('beta', 0.25), metadata=metadata)
        model.load_parameters(arrays)
        return model

    def save(self, file: str, *, overwrite: bool = False) -> None:
        """Save the model to an RFNN checkpoint file, the codebook is stored as its own block."""
        graphs = {
            'encoder': {'input_shape': list(self.encoder.input_shape), 'nodes': self.encoder.descriptors()},
            'decoder': {'input_shape': list(self.decoder.input_shape), 'nodes': self.decoder.descriptors()},
        }
        io.save_checkpoint(file, graphs, self.parameters(),
                           metadata={'beta': self.beta, **self.metadata},
                           overwrite=overwrite)


def build_model(*,
                rng: np.random.Generator = None,
                codebook_size: int = CODEBOOK_SIZE,
                beta: float = 0.25,
                dtype: type = np.float32) -> VQVAEModel:
    """Create an untrained model. The codewords are standard-normal vectors."""
    rng = rng or np.random.default_rng(0)
    encoder = build_encoder(rng=rng, dtype=dtype)
    decoder = build_decoder(rng=rng, dtype=dtype)
    entries = rng.standard_normal((codebook_size, CODEWORD_LENGTH)).astype(dtype)
    return VQVAEModel(encoder, Codebook(entries), decoder, beta=beta)


def encode(model: VQVAEModel, x: IQDatapoint | np.ndarray) -> LatentGrid:
    """See :meth:`VQVAEModel.encode`."""
    return model.encode(x)


def decode(model: VQVAEModel, code: LatentCode) -> np.ndarray:
    """See :meth:`VQVAEModel.decode`."""
    return model.decode(code)


def reconstruct(model: VQVAEModel,
                x: IQDatapoint | np.ndarray,
                rng: np.random.Generator = None,
                *,
                mode: QuantizeMode | str = QuantizeMode.STOCHASTIC) -> tuple[np.ndarray, LatentCode]:
    """See :meth:`VQVAEModel.reconstruct`."""
    return model.reconstruct(x, rng, mode=mode)


def reset_codewords(codebook: Codebook,
                    slices: np.ndarray,
                    fraction: float,
                    rng: np.random.Generator) -> np.ndarray:
    """Replace rarely-used codewords with encoder-output slices.

    Args:
        codebook: The codebook, its usage counts are for the epoch that just ended.
        slices: Candidate replacements, shape (M, 512).
        fraction: A codeword is reset if its usage is below this fraction of
            the mean usage.
        rng: Chooses the replacement slices.

    Returns:
        The indices of the codewords that were reset.
    """
    expected = codebook.usage.sum() / codebook.size
    reset = np.flatnonzero(codebook.usage < fraction * expected)
    if reset.size and slices.shape[0]:
        choice = rng.integers(0, slices.shape[0], size=reset.size)
        codebook.entries[reset] = slices[choice]
    return reset


def train_vqvae(dataset: Dataset,
                hyper: VQVAEHyper = VQVAEHyper(),
                rng: np.random.Generator = None) -> VQVAEModel:
    """Train the VQVAE on clean datapoints.

    The codeword indices are sampled from the posterior and the gradient
    of the decoder input is copied to the encoder output. At the end of
    every epoch the rarely-used codewords are reset.

    Args:
        dataset: The training datapoints.
        hyper: The hyperparameters.
        rng: The generator for initialization, sampling and shuffling.
            Default is a generator seeded with :attr:`VQVAEHyper.seed`.

    Returns:
        The trained model. The metadata contains the per-epoch history.

    Raises:
        DivergenceError: If a loss term becomes non-finite.
    """
    if len(dataset) == 0:
        raise ValueError('Cannot train on an empty dataset')
    if rng is None:
        rng = np.random.default_rng(derive_seeds(hyper.seed, 1)[0])
    model = build_model(rng=rng, codebook_size=hyper.codebook_size, beta=hyper.beta)
    book = model.codebook

    # initialize the codewords with encoder-output slices
    first = dataset.x[rng.permutation(len(dataset))[:hyper.batch_size]]
    z0 = model.encoder.forward(first).reshape(-1, CODEWORD_LENGTH)
    book.entries = z0[rng.choice(z0.shape[0], size=book.size, replace=z0.shape[0] < book.size)].copy()

    logger.info(f'training the VQVAE on {len(dataset)} datapoints '
                f'[epochs={hyper.epochs}, beta={hyper.beta}, codebook={book.size}]')
    state = OptState(lr=hyper.lr)
    history = []
    t0 = time.perf_counter()
    for epoch in range(1, hyper.epochs + 1):
        book.usage[:] = 0
        sums = dict.fromkeys(('total', 'reconstruction', 'quantization', 'commitment', 'kl'), 0.0)
        last_z = np.empty((0, CODEWORD_LENGTH))
        for step, idx in enumerate(batches(len(dataset), hyper.batch_size, rng=rng), start=1):
            loss, grads, _, indices = model.loss_and_grads(dataset.x[idx], rng=rng)
            terms = loss.as_dict()
            if not all(math.isfinite(v) for v in terms.values()):
                raise DivergenceError(epoch, step, terms)
            params, state = optimizer_step(model.parameters(), grads, state)
            model.load_parameters(params)
            book.usage += np.bincount(indices.ravel(), minlength=book.size)
            for key, value in terms.items():
                sums[key] += value * idx.size
            last_z = model.encoder.activation(model.encoder.output_name).reshape(-1, CODEWORD_LENGTH)

        usage = book.usage.copy()
        reset = reset_codewords(book, last_z, hyper.reset_fraction, rng)
        if reset.size:
            logger.debug(f'reset {reset.size} codewords {reset.tolist()}')
        record = {key: value / len(dataset) for key, value in sums.items()}
        record.update(epoch=epoch, perplexity=perplexity(usage), resets=int(reset.size))
        history.append(record)
        logger.info(f'epoch {epoch}/{hyper.epochs}: loss={record["total"]:.5f} '
                    f'rec={record["reconstruction"]:.5f} kl={record["kl"]:.4f} '
                    f'perplexity={record["perplexity"]:.1f} resets={reset.size} '
                    f'[elapsed {hhmmss(time.perf_counter() - t0)}]')

    model.metadata.update(epochs=len(history), hyper=asdict(hyper), history=history)
    return model


def reconstruction_error(model: VQVAEModel,
                         x: np.ndarray,
                         rng: np.random.Generator = None,
                         *,
                         mode: QuantizeMode | str = QuantizeMode.ARGMAX) -> np.ndarray:
    """Return ``‖x - x̂‖² / 2048`` of every datapoint in `x`."""
    batch, _ = _as_batch(x)
    x_hat, _ = model.reconstruct(batch, rng, mode=mode)
    return np.mean((x_hat.astype(np.float64) - batch) ** 2, axis=(1, 2))
