"""
The six-class modulation classifier.
"""
import threading
import time
from dataclasses import asdict
from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from . import io
from .log import logger
from .metrics import confusion_matrix
from .neuralcore import Conv1d
from .neuralcore import Dense
from .neuralcore import GlobalAvgPool1d
from .neuralcore import Graph
from .neuralcore import OptState
from .neuralcore import ReLU
from .neuralcore import optimizer_step
from .neuralcore import softmax_cross_entropy
from .utils import batches
from .utils import derive_seeds
from .utils import hhmmss
from .waveforms import Dataset
from .waveforms import IQDatapoint
from .waveforms import ModulationScheme
from .waveforms import NUM_CLASSES
from .waveforms import WINDOW

GRAPH_NAME = 'classifier'


class TrainingFailedError(RuntimeError):

    def __init__(self, accuracy: float, target: float) -> None:
        """The classifier did not reach the target accuracy within the epoch budget.

        Args:
            accuracy: The final validation accuracy.
            target: The accuracy that was required.
        """
        super().__init__(f'The classifier reached an accuracy of {accuracy:.4f}, '
                         f'the required accuracy is {target}')
        self.accuracy = accuracy
        self.target = target


@dataclass(frozen=True)
class TrainHyper:
    """Hyperparameters to train the classifier.

    Args:
        epochs: The maximum number of passes over the training data.
        batch_size: The number of datapoints per optimizer step.
        lr: The learning rate.
        seed: Seeds the initial weights, the validation split and the shuffling.
        validation: The fraction of each class that is held out to decide
            whether training was successful.
        target_accuracy: The validation accuracy that must be reached, 0 disables the check.
    """
    epochs: int = 40
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    validation: float = 0.1
    target_accuracy: float = 0.99

    def __post_init__(self) -> None:
        for name in ('epochs', 'batch_size', 'lr'):
            if getattr(self, name) <= 0:
                raise ValueError(f'{name} must be > 0, got {getattr(self, name)}')
        if not 0 <= self.validation < 1:
            raise ValueError(f'validation must be in [0, 1), got {self.validation}')
        if not 0 <= self.target_accuracy <= 1:
            raise ValueError(f'target_accuracy must be in [0, 1], got {self.target_accuracy}')


def build_graph(*, rng: np.random.Generator = None, dtype: type = np.float32) -> Graph:
    """Create the (untrained) classifier network.

    Two strided convolutions, global average pooling and two dense layers
    that map a (2, 1024) datapoint to 6 logits.
    """
    g = Graph((2, WINDOW), dtype=dtype)
    g.add('conv1', Conv1d(2, 16, 7, stride=2, padding=3, rng=rng))
    g.add('relu1', ReLU())
    g.add('conv2', Conv1d(16, 32, 5, stride=2, padding=2, rng=rng))
    g.add('relu2', ReLU())
    g.add('pool', GlobalAvgPool1d())
    g.add('dense1', Dense(32, 64, rng=rng))
    g.add('relu3', ReLU())
    g.add('logits', Dense(64, NUM_CLASSES, rng=rng))
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


class ClassifierModel:

    def __init__(self, graph: Graph, *, labels: tuple[str, ...] = None, metadata: dict = None) -> None:
        """A trained (or initialized) classifier.

        Args:
            graph: The network.
            labels: The scheme name of each output logit.
            metadata: Information about how the model was trained.
        """
        if labels is None:
            labels = tuple(s.value for s in ModulationScheme)
        if len(labels) != NUM_CLASSES:
            raise ValueError(f'A classifier must have {NUM_CLASSES} labels, got {len(labels)}')
        out = graph.node(graph.output_name).layer
        if not isinstance(out, Dense) or out.out_features != NUM_CLASSES:
            raise ValueError(f'The output layer must be a Dense layer with {NUM_CLASSES} outputs')
        self.graph = graph
        self.labels = tuple(labels)
        self.metadata = dict(metadata or {})
        self._lock = threading.Lock()

    def __repr__(self) -> str:
        return f'<ClassifierModel epochs={self.metadata.get("epochs")} ' \
               f'accuracy={self.metadata.get("accuracy")}>'

    def astype(self, dtype: type) -> 'ClassifierModel':
        """Return a copy of the model with a different floating-point type."""
        return ClassifierModel(self.graph.astype(dtype), labels=self.labels, metadata=self.metadata)

    def logits(self, x: IQDatapoint | np.ndarray, *, batch_size: int = 256) -> np.ndarray:
        """Return the logits of a datapoint, shape (6,), or of a batch, shape (N, 6)."""
        batch, single = _as_batch(x)
        out = np.empty((batch.shape[0], NUM_CLASSES), dtype=self.graph.dtype)
        with self._lock:
            for idx in batches(batch.shape[0], batch_size):
                out[idx] = self.graph.forward(batch[idx])
        return out[0] if single else out

    def loss_and_input_grad(self,
                            x: IQDatapoint | np.ndarray,
                            y: int | np.ndarray) -> tuple[float | np.ndarray, np.ndarray, np.ndarray]:
        """Return the cross-entropy loss and its gradient w.r.t. each channel.

        Args:
            x: A datapoint, shape (2, 1024), or a batch, shape (N, 2, 1024).
            y: The class label(s).

        Returns:
            The loss J, the gradient w.r.t. the I channel and the gradient
            w.r.t. the Q channel. For a batch, J has shape (N,) and each
            gradient has shape (N, 1024) and is the gradient of that
            datapoint's own loss.
        """
        batch, single = _as_batch(x)
        labels = np.atleast_1d(np.asarray(y, dtype=int))
        if labels.shape != (batch.shape[0],):
            raise ValueError(f'Expected {batch.shape[0]} label(s), got shape {labels.shape}')
        with self._lock:
            logits = self.graph.forward(batch)
            losses, grad = softmax_cross_entropy(logits, labels, reduction='none')
            _, input_grad = self.graph.backward(grad)
        if single:
            return float(losses[0]), input_grad[0, 0].copy(), input_grad[0, 1].copy()
        return losses, input_grad[:, 0].copy(), input_grad[:, 1].copy()

    def predict(self, x: IQDatapoint | np.ndarray, *, batch_size: int = 256) -> np.ndarray:
        """Return the class probabilities, shape (6,), or (N, 6) for a batch."""
        p = softmax(self.logits(x, batch_size=batch_size).astype(np.float64), axis=-1)
        return p

    def predict_labels(self, x: IQDatapoint | np.ndarray, *, batch_size: int = 256) -> np.ndarray | int:
        """Return the most probable class label(s)."""
        logits = self.logits(x, batch_size=batch_size)
        if logits.ndim == 1:
            return int(np.argmax(logits))
        return np.argmax(logits, axis=1)

    @classmethod
    def load(cls, file: str) -> 'ClassifierModel':
        """Load a model that was saved by :meth:`save`."""
        graphs, arrays, metadata = io.load_checkpoint(file)
        if GRAPH_NAME not in graphs:
            raise io.FormatError(f'{file!r} does not contain a {GRAPH_NAME!r} graph')
        d = graphs[GRAPH_NAME]
        graph = Graph.from_descriptors(tuple(d['input_shape']), d['nodes'])
        graph.load_parameters(arrays)
        labels = tuple(metadata.pop('labels', [s.value for s in ModulationScheme]))
        return cls(graph, labels=labels, metadata=metadata)

    def save(self, file: str, *, overwrite: bool = False) -> None:
        """Save the model to an RFNN checkpoint file."""
        graphs = {GRAPH_NAME: {'input_shape': list(self.graph.input_shape),
                               'nodes': self.graph.descriptors()}}
        io.save_checkpoint(file, graphs, self.graph.parameters(),
                           metadata={'labels': list(self.labels), **self.metadata},
                           overwrite=overwrite)


def predict(model: ClassifierModel, x: IQDatapoint | np.ndarray) -> np.ndarray:
    """Return the class probabilities of a datapoint (or of a batch)."""
    return model.predict(x)


def predict_labels(model: ClassifierModel, x: IQDatapoint | np.ndarray) -> np.ndarray | int:
    """Return the most probable class label of a datapoint (or of a batch)."""
    return model.predict_labels(x)


def loss_and_input_grad(model: ClassifierModel,
                        x: IQDatapoint | np.ndarray,
                        y: int | np.ndarray) -> tuple[float | np.ndarray, np.ndarray, np.ndarray]:
    """See :meth:`ClassifierModel.loss_and_input_grad`."""
    return model.loss_and_input_grad(x, y)


def evaluate(model: ClassifierModel, dataset: Dataset) -> tuple[float, np.ndarray]:
    """Classify a labeled dataset.

    Returns:
        The accuracy and the 6x6 confusion matrix (rows are the true labels,
        columns are the predicted labels).
    """
    if len(dataset) == 0:
        raise ValueError('Cannot evaluate an empty dataset')
    predicted = model.predict_labels(dataset.x)
    cm = confusion_matrix(dataset.labels, predicted)
    return float(np.trace(cm) / cm.sum()), cm


def _accuracy(model: ClassifierModel, dataset: Dataset) -> float:
    if len(dataset) == 0:
        return float('nan')
    return float(np.mean(model.predict_labels(dataset.x) == dataset.labels))


def train_classifier(dataset: Dataset, hyper: TrainHyper = TrainHyper()) -> ClassifierModel:
    """Train the classifier.

    A fraction of each class is held out for validation. Training stops
    early when every training and validation datapoint is classified
    correctly.

    Args:
        dataset: The training datapoints.
        hyper: The hyperparameters.

    Returns:
        The trained model. The metadata contains the per-epoch history.

    Raises:
        ValueError: If the dataset is empty or does not contain every class.
        TrainingFailedError: If the validation accuracy is below
            :attr:`TrainHyper.target_accuracy` after the last epoch.
    """
    if len(dataset) == 0:
        raise ValueError('Cannot train on an empty dataset')
    missing = [ModulationScheme.from_label(c).value
               for c, n in enumerate(dataset.counts()) if n == 0]
    if missing:
        raise ValueError(f'The training dataset does not contain the classes {missing}')

    init_seed, shuffle_seed = derive_seeds(hyper.seed, 2)
    graph = build_graph(rng=np.random.default_rng(init_seed))
    model = ClassifierModel(graph)
    if hyper.validation > 0:
        train, validation = dataset.split((1.0 - hyper.validation, hyper.validation))
    else:
        train, validation = dataset, dataset.take([])
    logger.info(f'training the classifier on {len(train)} datapoints '
                f'[validation={len(validation)}, epochs={hyper.epochs}, seed={hyper.seed}]')

    rng = np.random.default_rng(shuffle_seed)
    state = OptState(lr=hyper.lr)
    history = []
    accuracy = 0.0
    t0 = time.perf_counter()
    for epoch in range(1, hyper.epochs + 1):
        total, correct = 0.0, 0
        for idx in batches(len(train), hyper.batch_size, rng=rng):
            logits = graph.forward(train.x[idx])
            loss, grad = softmax_cross_entropy(logits, train.labels[idx])
            grads, _ = graph.backward(grad)
            params, state = optimizer_step(graph.parameters(), grads, state)
            graph.load_parameters(params)
            total += loss * idx.size
            correct += int(np.sum(np.argmax(logits, axis=1) == train.labels[idx]))

        train_accuracy = correct / len(train)
        val_accuracy = _accuracy(model, validation)
        accuracy = train_accuracy if np.isnan(val_accuracy) else val_accuracy
        history.append({'epoch': epoch, 'loss': total / len(train),
                        'train_accuracy': train_accuracy, 'validation_accuracy': accuracy})
        logger.info(f'epoch {epoch}/{hyper.epochs}: loss={total / len(train):.5f} '
                    f'train={train_accuracy:.4f} validation={accuracy:.4f} '
                    f'[elapsed {hhmmss(time.perf_counter() - t0)}]')
        if train_accuracy == 1.0 and accuracy == 1.0:
            logger.info('every training and validation datapoint is classified correctly')
            break

    model.metadata.update(epochs=len(history), accuracy=accuracy,
                          hyper=asdict(hyper), history=history)
    if accuracy < hyper.target_accuracy:
        raise TrainingFailedError(accuracy, hyper.target_accuracy)
    return model
