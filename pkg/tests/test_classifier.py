import os

import numpy as np
import pytest

from rfadvq import classifier
from rfadvq.classifier import ClassifierModel
from rfadvq.classifier import TrainHyper
from rfadvq.classifier import TrainingFailedError
from rfadvq.classifier import build_graph
from rfadvq.neuralcore import numeric_gradient
from rfadvq.waveforms import Dataset
from rfadvq.waveforms import DatasetSpec
from rfadvq.waveforms import WINDOW
from rfadvq.waveforms import generate_dataset


@pytest.fixture(scope='module')
def dataset() -> Dataset:
    return generate_dataset(DatasetSpec(per_class_count=10, seed=1))


def model(seed: int = 0, dtype=np.float32) -> ClassifierModel:
    return ClassifierModel(build_graph(rng=np.random.default_rng(seed), dtype=dtype))


class FixedPredictions:
    """Predicts the labels that it was created with."""

    def __init__(self, labels):
        self.labels = np.asarray(labels)

    def predict_labels(self, x):
        return self.labels[:len(x)]


def test_six_logits(dataset):
    m = model()
    assert m.logits(dataset.x[:3]).shape == (3, 6)
    assert m.logits(dataset.x[0]).shape == (6,)
    assert m.labels == ('ASK4', 'PAM8', 'PSK16', 'QAM32X', 'FSK2', 'OFDM256')


def test_predict_sums_to_one(dataset):
    m = model()
    p = classifier.predict(m, dataset.x)
    assert p.shape == (60, 6)
    assert np.all(p >= 0)
    assert np.allclose(p.sum(axis=1), 1, atol=1e-6)


def test_predict_is_pure(dataset):
    m = model()
    x = dataset.x[7]
    assert np.array_equal(m.predict(x), m.predict(x.copy()))
    assert classifier.predict_labels(m, x) == int(np.argmax(m.predict(x)))
    assert np.array_equal(m.predict_labels(dataset.x[:5], batch_size=2), np.argmax(m.logits(dataset.x[:5]), axis=1))


def test_predict_shape_mismatch():
    with pytest.raises(ValueError, match=r'Expected a datapoint of shape'):
        model().predict(np.zeros((2, 512)))


def test_invalid_model():
    g = build_graph()
    with pytest.raises(ValueError, match=r'6 labels'):
        ClassifierModel(g, labels=('a', 'b'))


def test_loss_is_nonnegative(dataset):
    m = model()
    loss, grad_i, grad_q = m.loss_and_input_grad(dataset.x, dataset.labels)
    assert loss.shape == (60,)
    assert np.all(loss >= 0)
    assert grad_i.shape == grad_q.shape == (60, WINDOW)


def test_loss_single_datapoint(dataset):
    m = model()
    loss, grad_i, grad_q = classifier.loss_and_input_grad(m, dataset.x[0], 0)
    assert isinstance(loss, float)
    assert grad_i.shape == grad_q.shape == (WINDOW,)
    p = m.predict(dataset.x[0])
    assert loss == pytest.approx(-np.log(p[0]), rel=1e-4)


def test_per_datapoint_gradients(dataset):
    # the gradient of a datapoint in a batch is the gradient of its own loss
    m = model(dtype=np.float64)
    _, batch_i, batch_q = m.loss_and_input_grad(dataset.x[:4], dataset.labels[:4])
    _, single_i, single_q = m.loss_and_input_grad(dataset.x[2], dataset.labels[2])
    assert np.allclose(batch_i[2], single_i, rtol=1e-10, atol=1e-14)
    assert np.allclose(batch_q[2], single_q, rtol=1e-10, atol=1e-14)


def test_confident_prediction_has_zero_loss(dataset):
    m = model()
    logits = m.graph.node('logits').layer
    logits.params['weight'][:] = 0
    logits.params['bias'][:] = [1000, 0, 0, 0, 0, 0]
    loss, grad_i, grad_q = m.loss_and_input_grad(dataset.x[0], 0)
    assert loss == pytest.approx(0, abs=1e-12)
    assert np.allclose(grad_i, 0, atol=1e-12)
    assert np.allclose(grad_q, 0, atol=1e-12)


def test_input_gradient_finite_differences(dataset):
    m = model(seed=3, dtype=np.float64)
    x = dataset.x[13].astype(np.float64)
    y = int(dataset.labels[13])
    _, grad_i, grad_q = m.loss_and_input_grad(x, y)
    analytic = np.stack((grad_i, grad_q)).ravel()
    indices = np.random.default_rng(0).choice(x.size, size=20, replace=False)
    numeric = numeric_gradient(lambda: m.loss_and_input_grad(x, y)[0], x, indices, 1e-5)
    scale = np.maximum(np.maximum(np.abs(analytic[indices]), np.abs(numeric)), 1e-6)
    assert np.max(np.abs(analytic[indices] - numeric) / scale) < 1e-4


def test_invalid_label(dataset):
    with pytest.raises(ValueError, match=r'label must be in'):
        model().loss_and_input_grad(dataset.x[0], 6)
    with pytest.raises(ValueError, match=r'Expected 3 label'):
        model().loss_and_input_grad(dataset.x[:3], [0, 1])


def test_evaluate_perfect(dataset):
    accuracy, cm = classifier.evaluate(FixedPredictions(dataset.labels), dataset)
    assert accuracy == 1.0
    assert np.array_equal(cm, np.diag([10] * 6))


def test_evaluate_one_class(dataset):
    accuracy, cm = classifier.evaluate(FixedPredictions(np.full(60, 4)), dataset)
    assert accuracy == pytest.approx(1 / 6)
    assert np.array_equal(np.flatnonzero(cm.sum(axis=0)), [4])
    assert np.array_equal(cm.sum(axis=1), dataset.counts())


def test_evaluate_random(dataset):
    predicted = np.random.default_rng(9).integers(0, 6, size=60)
    accuracy, cm = classifier.evaluate(FixedPredictions(predicted), dataset)
    assert accuracy == np.mean(predicted == dataset.labels)
    assert accuracy == np.trace(cm) / 60
    assert np.array_equal(cm.sum(axis=1), dataset.counts())


def test_evaluate_empty(dataset):
    with pytest.raises(ValueError, match=r'empty dataset'):
        classifier.evaluate(model(), dataset.take([]))


@pytest.mark.parametrize(
    'kwargs',
    [dict(epochs=0),
     dict(batch_size=0),
     dict(lr=-1.0),
     dict(validation=1.0),
     dict(target_accuracy=1.5)])
def test_train_hyper_invalid(kwargs):
    with pytest.raises(ValueError):
        TrainHyper(**kwargs)


def test_train_empty(dataset):
    with pytest.raises(ValueError, match=r'empty dataset'):
        classifier.train_classifier(dataset.take([]), TrainHyper(epochs=1))


@pytest.mark.parametrize(
    ('labels', 'match'),
    [([3], r"\['ASK4', 'PAM8', 'PSK16', 'FSK2', 'OFDM256'\]"),
     ([0, 2], r"\['PAM8', 'QAM32X', 'FSK2', 'OFDM256'\]"),
     ([0, 1, 2, 3, 4], r"\['OFDM256'\]")])
def test_train_missing_classes(dataset, labels, match):
    hyper = TrainHyper(epochs=1, validation=0, target_accuracy=0)
    with pytest.raises(ValueError, match=r'does not contain the classes ' + match):
        classifier.train_classifier(dataset.subset(labels), hyper)


def test_train_deterministic(dataset):
    hyper = TrainHyper(epochs=2, batch_size=16, seed=5, validation=0.2, target_accuracy=0)
    a = classifier.train_classifier(dataset, hyper)
    b = classifier.train_classifier(dataset, hyper)
    for key, value in a.graph.parameters().items():
        assert np.array_equal(value, b.graph.parameters()[key])
    assert a.metadata['epochs'] == 2
    assert [h['epoch'] for h in a.metadata['history']] == [1, 2]
    assert a.metadata['history'] == b.metadata['history']


def test_train_failed(dataset):
    hyper = TrainHyper(epochs=1, lr=1e-9, validation=0.2, target_accuracy=1.0)
    with pytest.raises(TrainingFailedError, match=r'required accuracy is 1.0') as e:
        classifier.train_classifier(dataset, hyper)
    assert 0 <= e.value.accuracy < 1.0


def test_save_load(tmp_path, dataset):
    m = model(seed=8)
    m.metadata['accuracy'] = 0.5
    file = os.path.join(tmp_path, 'classifier.rfnn')
    m.save(file)
    with pytest.raises(FileExistsError):
        m.save(file)
    loaded = ClassifierModel.load(file)
    assert loaded.labels == m.labels
    assert loaded.metadata == {'accuracy': 0.5}
    assert np.array_equal(loaded.logits(dataset.x[:4]), m.logits(dataset.x[:4]))
