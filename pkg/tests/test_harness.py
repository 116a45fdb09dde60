import os
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest
from msl.io import read

from rfadvq import config
from rfadvq import io
from rfadvq.harness import ArtifactPaths
from rfadvq.harness import EvalReport
from rfadvq.harness import StageError
from rfadvq.harness import run_experiment
from rfadvq.harness import stage
from rfadvq.waveforms import WINDOW

TINY = """
[experiment]
seed = 1

[dataset]
train_per_class = 4
test_per_class = 2

[classifier]
epochs = 1
batch_size = 8
target_accuracy = 0

[vqvae]
epochs = 1
batch_size = 8

[attacks]
kinds = FGSM2, PGD
epsilons = 0.1
pgd_steps = 1

[evaluation]
trials = 2
distance_trials = 2
"""


def tiny(output: str, **overrides) -> config.ExperimentConfig:
    return config.parse(TINY, {'experiment.output': output, **overrides})


@pytest.fixture(scope='module')
def experiment(tmp_path_factory):
    cfg = tiny(str(tmp_path_factory.mktemp('experiment')))
    return cfg, run_experiment(cfg)


def test_stage_error():
    with pytest.raises(StageError, match=r"'attack' stage failed: KeyError") as e:
        with stage('attack'):
            raise KeyError('x')
    assert isinstance(e.value.cause, KeyError)


def test_unknown_stage(tmp_path):
    with pytest.raises(ValueError, match=r'Unknown stage'):
        run_experiment(tiny(str(tmp_path)), until='plot')


def test_artifacts(experiment):
    cfg, _ = experiment
    paths = ArtifactPaths(cfg.output)
    for file in (paths.train, paths.test, paths.classifier, paths.vqvae,
                 os.path.join(cfg.output, 'attacks', 'FGSM2-0.1.rfds'),
                 os.path.join(cfg.output, 'attacks', 'PGD-0.1.rfds'),
                 paths.tokens('NONE'), paths.tokens('FGSM2-0.1'), paths.tokens('PGD-0.1'),
                 os.path.join(paths.report, 'report.json'),
                 os.path.join(paths.report, 'accuracy.csv'),
                 os.path.join(paths.report, 'distances.csv'),
                 os.path.join(paths.report, 'histograms.csv'),
                 os.path.join(paths.plots, 'accuracy.csv')):
        assert os.path.isfile(file), file

    train, test = io.load_dataset(paths.train), io.load_dataset(paths.test)
    assert np.array_equal(train.counts(), [4] * 6)
    assert np.array_equal(test.counts(), [2] * 6)
    assert train.std == test.std
    assert io.load_tokens(paths.tokens('PGD-0.1')).shape == (12, 64)

    manifest = io.load_json(io.sidecar(os.path.join(cfg.output, 'attacks', 'PGD-0.1.rfds')))['manifest']
    assert manifest['attack']['kind'] == 'PGD'
    assert manifest['count'] == 12
    assert manifest['linf_max'] <= 0.1 + 1e-6


def test_report(experiment):
    _, report = experiment
    assert isinstance(report, EvalReport)
    a = report.accuracy
    assert list(a.columns) == ['attack', 'epsilon', 'snr_a', 'clean', 'attacked', 'reconstructed',
                               'linf_max', 'trials']
    assert a['attack'].tolist() == ['NONE', 'FGSM2', 'PGD']
    assert a['epsilon'].tolist() == [0.0, 0.1, 0.1]
    assert np.isnan(a['snr_a'][0])
    assert report.accuracy_of('NONE', 0.0, 'attacked') == report.accuracy_of('NONE', 0.0, 'clean')
    assert all(a['trials'] == 2)
    with pytest.raises(KeyError):
        report.accuracy_of('FGSM1', 0.1, 'clean')

    assert len(report.confusion) == 9
    assert report.confusion[('clean', 'PGD', 0.1)].sum() == 12
    assert report.confusion[('attacked', 'PGD', 0.1)].sum() == 12
    assert report.confusion[('reconstructed', 'PGD', 0.1)].sum() == 24

    assert len(report.histograms) == 18
    assert all(h.total == 2 * 64 for h in report.histograms)
    assert len(report.iq) == 18
    assert report.iq[('FGSM2', 0.1, 'PSK16')].shape == (3, 2, WINDOW)

    d = report.distances
    assert len(d) == 18
    assert set(d['scheme']) == {'ASK4', 'PAM8', 'PSK16', 'QAM32X', 'FSK2', 'OFDM256'}
    assert 'normalized_hamming' in d.columns
    assert report.metadata['quantize_mode'] == 'stochastic'


def test_report_json(experiment):
    cfg, report = experiment
    root = read(os.path.join(cfg.output, 'report', 'report.json'))
    assert root.metadata.quantize_mode == 'stochastic'
    assert root.metadata.trials == 2
    assert np.array_equal(root.accuracy['attack'], ['NONE', 'FGSM2', 'PGD'])
    assert np.allclose(root.accuracy['reconstructed'], report.accuracy['reconstructed'])
    assert '/confusion/reconstructed/PGD-0.1' in root
    assert '/histograms/FGSM2-0.1/OFDM256' in root
    assert root['/histograms/FGSM2-0.1/OFDM256'].metadata.num_datapoints == 2

    csv = pd.read_csv(os.path.join(cfg.output, 'report', 'histograms.csv'))
    assert len(csv) == 18
    assert 'c127' in csv.columns


def test_rerun_is_reproducible(experiment):
    cfg, _ = experiment
    file = os.path.join(cfg.output, 'report', 'report.json')
    with open(file, mode='rb') as fp:
        before = fp.read()
    tokens = io.load_tokens(ArtifactPaths(cfg.output).tokens('FGSM2-0.1'))
    run_experiment(replace(cfg, reuse=False), until='evaluate')
    with open(file, mode='rb') as fp:
        assert fp.read() == before
    assert np.array_equal(io.load_tokens(ArtifactPaths(cfg.output).tokens('FGSM2-0.1')), tokens)


def test_reuse(tmp_path):
    cfg = tiny(str(tmp_path), **{'attacks.kinds': 'FGSM2'})
    assert run_experiment(cfg, until='generate') is None
    paths = ArtifactPaths(cfg.output)
    assert os.path.isfile(paths.test)
    assert not os.path.isdir(os.path.join(cfg.output, 'models'))

    assert run_experiment(cfg, until='attack') is None
    mtime = os.stat(paths.classifier).st_mtime_ns
    assert not os.path.isfile(paths.vqvae)
    run_experiment(cfg, until='attack')
    assert os.stat(paths.classifier).st_mtime_ns == mtime

    # only the final stage follows the reuse setting
    run_experiment(replace(cfg, reuse=False), until='attack')
    assert os.stat(paths.classifier).st_mtime_ns == mtime


def test_data_replaces_test_dataset(tmp_path):
    cfg = tiny(str(tmp_path), **{'attacks.kinds': 'FGSM2'})
    run_experiment(cfg, until='generate')
    test = io.load_dataset(ArtifactPaths(cfg.output).test)
    other = os.path.join(tmp_path, 'other.rfds')
    io.save_dataset(other, test.subset([1]))
    run_experiment(cfg, until='attack', data=other)
    attacked = io.load_dataset(os.path.join(cfg.output, 'attacks', 'FGSM2-0.1.rfds'))
    assert len(attacked) == 2
    assert attacked.classes == [1]


@pytest.mark.parametrize('until', ['train-classifier', 'train-vqvae'])
def test_data_replaces_training_dataset(tmp_path, until):
    cfg = tiny(str(tmp_path))
    run_experiment(cfg, until=until)
    paths = ArtifactPaths(cfg.output)
    checkpoint = paths.classifier if until == 'train-classifier' else paths.vqvae

    def contents() -> bytes:
        with open(checkpoint, mode='rb') as fp:
            return fp.read()

    original = contents()
    first, second = io.load_dataset(paths.train).split((0.5, 0.5))
    for i, part in enumerate((first, second)):
        io.save_dataset(os.path.join(tmp_path, f'part{i}.rfds'), part)

    run_experiment(cfg, until=until, data=os.path.join(tmp_path, 'part0.rfds'))
    trained_on_first = contents()
    assert trained_on_first != original
    run_experiment(cfg, until=until, data=os.path.join(tmp_path, 'part1.rfds'))
    assert contents() != trained_on_first


def test_stage_failure_keeps_artifacts(tmp_path):
    cfg = tiny(str(tmp_path))
    run_experiment(cfg, until='generate')
    paths = ArtifactPaths(cfg.output)
    os.makedirs(os.path.dirname(paths.classifier))
    with open(paths.classifier, mode='wb') as fp:
        fp.write(b'not a checkpoint')
    with pytest.raises(StageError, match=r"'train-classifier' stage failed") as e:
        run_experiment(cfg, until='attack')
    assert e.value.stage == 'train-classifier'
    assert isinstance(e.value.cause, io.FormatError)
    assert os.path.isfile(paths.train)
