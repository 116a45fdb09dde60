import os

import numpy as np
import pytest
from scipy.stats import chisquare

from rfadvq import vqvae
from rfadvq.neuralcore import numeric_gradient
from rfadvq.vqvae import CODEWORD_LENGTH
from rfadvq.vqvae import Codebook
from rfadvq.vqvae import DivergenceError
from rfadvq.vqvae import LatentCode
from rfadvq.vqvae import LatentGrid
from rfadvq.vqvae import NUM_SLICES
from rfadvq.vqvae import QuantizeMode
from rfadvq.vqvae import VQVAEHyper
from rfadvq.vqvae import VQVAEModel
from rfadvq.vqvae import build_model
from rfadvq.vqvae import posterior
from rfadvq.vqvae import quantize
from rfadvq.vqvae import reset_codewords
from rfadvq.vqvae import sample_indices
from rfadvq.waveforms import DatasetSpec
from rfadvq.waveforms import WINDOW
from rfadvq.waveforms import generate_dataset


@pytest.fixture(scope='module')
def dataset():
    return generate_dataset(DatasetSpec(per_class_count=2, seed=4))


def axis_codebook(c: np.ndarray) -> Codebook:
    # codeword k is sqrt(c[k]) along the first axis, so ‖0 - e_k‖² = c[k]
    entries = np.zeros((c.size, CODEWORD_LENGTH))
    entries[:, 0] = np.sqrt(c)
    return Codebook(entries)


@pytest.mark.parametrize(
    ('value', 'expect'),
    [('stochastic', QuantizeMode.STOCHASTIC),
     ('Sampling', QuantizeMode.STOCHASTIC),
     ('argmax', QuantizeMode.ARGMAX),
     ('nearest', QuantizeMode.ARGMAX)])
def test_quantize_mode(value, expect):
    assert QuantizeMode(value) is expect


def test_hyper_invalid():
    with pytest.raises(ValueError, match=r'beta'):
        VQVAEHyper(beta=-0.1)
    with pytest.raises(ValueError, match=r'reset_fraction'):
        VQVAEHyper(reset_fraction=1.0)
    with pytest.raises(ValueError, match=r'epochs'):
        VQVAEHyper(epochs=0)


def test_codebook_invalid():
    with pytest.raises(ValueError, match=r'shape'):
        Codebook(np.zeros((4, 10)))
    entries = np.zeros((4, CODEWORD_LENGTH))
    entries[1, 3] = np.nan
    with pytest.raises(ValueError, match=r'finite'):
        Codebook(entries)
    book = Codebook(np.zeros((4, CODEWORD_LENGTH)))
    assert len(book) == 4
    assert np.array_equal(book.usage, [0, 0, 0, 0])


def test_posterior_sums_to_one_for_extreme_distances():
    rng = np.random.default_rng(0)
    book = Codebook(rng.standard_normal((128, CODEWORD_LENGTH)))
    for z in (np.full(CODEWORD_LENGTH, 1e4), np.full(CODEWORD_LENGTH, -1e3), np.zeros(CODEWORD_LENGTH)):
        p = posterior(z, book)
        assert p.shape == (128,)
        assert np.all(np.isfinite(p))
        assert np.all(p >= 0)
        assert p.sum() == pytest.approx(1.0, abs=1e-12)


def test_posterior_uniform_for_identical_codewords():
    book = Codebook(np.zeros((128, CODEWORD_LENGTH)))
    z = np.random.default_rng(1).standard_normal((3, CODEWORD_LENGTH))
    assert np.allclose(posterior(z, book), 1 / 128, atol=1e-15)


def test_posterior_values():
    c = np.array([0.0, 1.0, 2.0, 3.0])
    p = posterior(np.zeros(CODEWORD_LENGTH), axis_codebook(c))
    expect = np.exp(-c) / np.sum(np.exp(-c))
    assert np.allclose(p, expect, atol=1e-12)


def test_sampled_frequencies_follow_posterior():
    c = np.linspace(0, 3, 128)
    p = posterior(np.zeros(CODEWORD_LENGTH), axis_codebook(c))
    draws = 10_000
    indices = sample_indices(np.tile(p, (draws, 1)), np.random.default_rng(7))
    observed = np.bincount(indices, minlength=128)
    assert observed.sum() == draws
    _, pvalue = chisquare(observed, draws * p)
    assert pvalue > 1e-3


def test_sample_indices_degenerate():
    p = np.zeros((5, 8))
    p[:, 6] = 1.0
    assert np.array_equal(sample_indices(p, np.random.default_rng(0)), [6] * 5)


def test_quantize_argmax_is_nearest():
    c = np.array([4.0, 0.5, 2.0, 9.0])
    book = axis_codebook(c)
    grid = np.zeros((NUM_SLICES, CODEWORD_LENGTH))
    code = quantize(grid, book, mode='argmax')
    assert np.array_equal(code.indices, [1] * NUM_SLICES)
    assert np.array_equal(code.vectors, book.entries[code.indices])


def test_quantize_stochastic_requires_rng():
    book = Codebook(np.zeros((4, CODEWORD_LENGTH)))
    with pytest.raises(ValueError, match=r'random-number generator'):
        quantize(np.zeros((NUM_SLICES, CODEWORD_LENGTH)), book)


def test_latent_code_shape(dataset):
    model = build_model(rng=np.random.default_rng(2))
    grid = model.encode(dataset.x[0])
    assert isinstance(grid, LatentGrid)
    assert grid.values.shape == (NUM_SLICES, CODEWORD_LENGTH)
    code = model.quantize(grid, rng=np.random.default_rng(3))
    assert len(code) == 64
    assert code.indices.shape == (64,)
    assert np.all((code.indices >= 0) & (code.indices < 128))
    assert code.vectors.shape == (64, CODEWORD_LENGTH)
    tokens = model.tokens(dataset.x[:3], np.random.default_rng(3))
    assert tokens.shape == (3, 64)


def test_latent_shape_errors():
    with pytest.raises(ValueError, match=r'latent grid'):
        LatentGrid(np.zeros((63, CODEWORD_LENGTH)))
    with pytest.raises(ValueError, match=r'latent code'):
        LatentCode(np.zeros(10, dtype=int), np.zeros((10, CODEWORD_LENGTH)))
    with pytest.raises(ValueError, match=r'Expected codewords'):
        LatentCode(np.zeros(64, dtype=int), np.zeros((64, 10)))


def test_reconstruct_shapes_and_reproducibility(dataset):
    model = build_model(rng=np.random.default_rng(2))
    x_hat, code = model.reconstruct(dataset.x[:4], np.random.default_rng(11))
    assert x_hat.shape == (4, 2, WINDOW)
    assert code.indices.shape == (4, 64)
    again, code2 = vqvae.reconstruct(model, dataset.x[:4], np.random.default_rng(11))
    assert np.array_equal(x_hat, again)
    assert np.array_equal(code.indices, code2.indices)
    single, _ = model.reconstruct(dataset.x[0], mode='argmax')
    assert single.shape == (2, WINDOW)
    assert vqvae.reconstruction_error(model, dataset.x[:4]).shape == (4,)


def test_encode_invalid_shape():
    model = build_model()
    with pytest.raises(ValueError, match=r'Expected a datapoint'):
        model.encode(np.zeros((2, 512)))
    with pytest.raises(ValueError, match=r'Expected codewords'):
        model.decode(np.zeros((3, 32, CODEWORD_LENGTH)))


def test_loss_terms(dataset):
    model = build_model(rng=np.random.default_rng(5))
    loss, grads, input_grad, indices = model.loss_and_grads(dataset.x[:2], rng=np.random.default_rng(0))
    assert loss.total == pytest.approx(
        loss.reconstruction + loss.quantization + model.beta * (loss.commitment + loss.kl))
    assert loss.quantization == loss.commitment
    assert 0 <= loss.kl <= np.log(128) + 1e-9
    assert set(grads) == set(model.parameters())
    assert input_grad.shape == (2, 2, WINDOW)
    assert indices.shape == (2, 64)
    with pytest.raises(ValueError, match=r'Expected indices'):
        model.loss_and_grads(dataset.x[:2], indices=np.zeros((2, 10), dtype=int))


@pytest.mark.parametrize(
    ('p', 'expect'),
    [(np.full((3, 128), 1 / 128), 0.0),
     (np.eye(128)[[0, 5, 127]], np.log(128)),
     (np.full((1, 4), 0.25), 0.0),
     (np.array([[0.5, 0.5, 0.0, 0.0]]), np.log(2))])
def test_kl_uniform(p, expect):
    kl = vqvae.kl_uniform(p)
    assert kl.shape == (p.shape[0],)
    assert np.allclose(kl, expect, rtol=0, atol=1e-12)


def test_kl_uniform_is_positive_away_from_uniform():
    rng = np.random.default_rng(3)
    p = rng.dirichlet(np.ones(128), size=50)
    kl = vqvae.kl_uniform(p)
    assert np.all(kl > 0)
    assert np.allclose(kl, vqvae.kl_uniform(p, np.log(p)), rtol=0, atol=1e-12)


def test_loss_gradients_finite_differences(dataset):
    # with the indices held fixed, each parameter block receives the gradient
    # of the loss terms that are not stopped for it
    model = build_model(rng=np.random.default_rng(6), dtype=np.float64)
    x = dataset.x[[0, 7]].astype(np.float64)
    z = model.encode(x).values.reshape(-1, CODEWORD_LENGTH)
    noise = np.random.default_rng(1).normal(scale=0.05, size=(128, CODEWORD_LENGTH))
    model.codebook.entries[:] = z[:128] + noise
    _, grads, _, indices = model.loss_and_grads(x, rng=np.random.default_rng(2), straight_through=False)

    def terms():
        loss, *_ = model.loss_and_grads(x, indices=indices, straight_through=False)
        return loss

    objectives = {
        'decoder': lambda: terms().total,
        'encoder': lambda: model.beta * (terms().commitment + terms().kl),
        'codebook': lambda: terms().reconstruction + terms().quantization + model.beta * terms().kl,
    }
    rng = np.random.default_rng(3)
    params = model.parameters()
    for key in ('decoder.up2.weight', 'decoder.project.bias', 'encoder.conv1.weight',
                'encoder.project.weight', 'codebook'):
        array = params[key]
        if key == 'codebook':
            # the selected codewords
            rows = np.unique(indices)[:4]
            flat = (rows[:, None] * CODEWORD_LENGTH + np.arange(0, CODEWORD_LENGTH, 97)).ravel()
        else:
            flat = rng.choice(array.size, size=min(12, array.size), replace=False)
        numeric = numeric_gradient(objectives[key.split('.')[0]], array, flat, 1e-5)
        analytic = grads[key].ravel()[flat]
        scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
        assert np.max(np.abs(analytic - numeric) / scale) < 1e-4, key


def test_reset_codewords():
    rng = np.random.default_rng(0)
    book = Codebook(np.zeros((128, CODEWORD_LENGTH)))
    book.usage[:] = 100
    book.usage[[5, 90]] = 0
    slices = rng.standard_normal((10, CODEWORD_LENGTH))
    reset = reset_codewords(book, slices, 0.01, rng)
    assert np.array_equal(reset, [5, 90])
    for k in reset:
        assert any(np.array_equal(book.entries[k], s) for s in slices)
    assert not np.any(book.entries[0])


def test_reset_codewords_none_below_threshold():
    book = Codebook(np.zeros((4, CODEWORD_LENGTH)))
    book.usage[:] = [10, 20, 30, 1]
    assert reset_codewords(book, np.ones((3, CODEWORD_LENGTH)), 0.01, np.random.default_rng(0)).size == 0
    assert not np.any(book.entries)


def test_train_deterministic(dataset):
    hyper = VQVAEHyper(epochs=2, batch_size=4, seed=3)
    a = vqvae.train_vqvae(dataset, hyper)
    b = vqvae.train_vqvae(dataset, hyper)
    assert np.array_equal(a.codebook.entries, b.codebook.entries)
    for key, value in a.parameters().items():
        assert np.array_equal(value, b.parameters()[key])
    history = a.metadata['history']
    assert [h['epoch'] for h in history] == [1, 2]
    assert all(1 <= h['perplexity'] <= 128 for h in history)
    assert a.metadata['hyper']['beta'] == 0.25


TRAIN_SEED = 7


@pytest.fixture(scope='module')
def trained(dataset) -> VQVAEModel:
    hyper = VQVAEHyper(epochs=8, batch_size=4, lr=2e-3, reset_fraction=0)
    return vqvae.train_vqvae(dataset, hyper, rng=np.random.default_rng(TRAIN_SEED))


def test_train_lowers_loss(trained):
    history = trained.metadata['history']
    assert len(history) == 8
    assert all(h['resets'] == 0 for h in history)
    assert history[-1]['total'] < history[0]['total']
    assert history[-1]['reconstruction'] < history[0]['reconstruction']


def test_train_lowers_reconstruction_error(dataset, trained):
    # same initial weights as the trained model
    untrained = build_model(rng=np.random.default_rng(TRAIN_SEED))
    before = vqvae.reconstruction_error(untrained, dataset.x)
    after = vqvae.reconstruction_error(trained, dataset.x)
    assert after.shape == before.shape == (len(dataset),)
    assert np.all(after >= 0)
    assert np.mean(after) < np.mean(before)


def test_train_empty(dataset):
    with pytest.raises(ValueError, match=r'empty dataset'):
        vqvae.train_vqvae(dataset.take([]), VQVAEHyper(epochs=1))


def test_train_diverges(dataset, monkeypatch):
    original = VQVAEModel.loss_and_grads

    def nan_loss(self, *args, **kwargs):
        loss, grads, input_grad, indices = original(self, *args, **kwargs)
        loss.reconstruction = float('nan')
        return loss, grads, input_grad, indices

    monkeypatch.setattr(VQVAEModel, 'loss_and_grads', nan_loss)
    with pytest.raises(DivergenceError, match=r'epoch 1, step 1') as e:
        vqvae.train_vqvae(dataset, VQVAEHyper(epochs=1, batch_size=4))
    assert e.value.epoch == 1
    assert np.isnan(e.value.terms['reconstruction'])


def test_save_load(tmp_path, dataset):
    model = build_model(rng=np.random.default_rng(9), beta=0.5)
    model.metadata['note'] = 'test'
    file = os.path.join(tmp_path, 'vqvae.rfnn')
    model.save(file)
    loaded = VQVAEModel.load(file)
    assert loaded.beta == 0.5
    assert loaded.metadata == {'note': 'test'}
    assert np.array_equal(loaded.codebook.entries, model.codebook.entries)
    a, _ = model.reconstruct(dataset.x[:2], mode='argmax')
    b, _ = loaded.reconstruct(dataset.x[:2], mode='argmax')
    assert np.array_equal(a, b)
