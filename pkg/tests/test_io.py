import os
import struct
from tempfile import NamedTemporaryFile
from tempfile import gettempdir

import numpy as np
import pandas as pd
import pytest
from msl.io import read

from rfadvq import __version__
from rfadvq import io
from rfadvq.waveforms import Dataset
from rfadvq.waveforms import WINDOW


def remove(file):
    for f in (file, io.sidecar(file)):
        if os.path.isfile(f):
            os.chmod(f, 0o777)
            os.remove(f)


@pytest.fixture
def dataset():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, size=(5, 2, WINDOW)).astype(np.float32)
    return Dataset(x=x, labels=[0, 5, 2, 2, 1], std=0.42, meta={'seed': 7, 'schemes': ['ASK4']})


def test_exists():
    with NamedTemporaryFile() as file:
        with pytest.raises(FileExistsError):
            io.ReportWriter(file.name)


def test_write_read():
    file = gettempdir() + '/rfadvq-writer-testing.json'
    remove(file)

    w = io.ReportWriter(file)
    w.initialize('attack', 'epsilon', 'accuracy', name='accuracy', types=['U16', float, float])
    w.append('FGSM2', 0.1, 0.5)
    assert np.array_equal(w.data()['attack'], ['FGSM2'])
    assert np.array_equal(w.data(name='accuracy')['epsilon'], [0.1])
    w.append('PGD', 0.2, 0.25)
    w.append('NONE', 0.0, 1.0)
    assert np.array_equal(w.data()['accuracy'], [0.5, 0.25, 1.0])
    assert w.frame().shape == (3, 3)
    assert w.meta() == {}
    w.initialize('x', 'y', name='/foo/bar', fruit='apple', types=[int, int], size=1)
    for i in range(20):
        w.append(i, -i)
    assert np.array_equal(w.data()['x'], np.arange(20))
    assert w.meta() == {'fruit': 'apple'}
    w.update_metadata(name='/foo/bar', colour='red')
    w.append('PSK16', 0.3, 0.0, name='accuracy')
    assert np.array_equal(w.data(name='accuracy')['attack'], ['FGSM2', 'PGD', 'NONE', 'PSK16'])
    assert w.tables == ['accuracy', '/foo/bar']
    w.write()

    root = read(w.file)
    assert root.metadata.software_version == __version__
    assert '/accuracy' in root
    assert '/foo/bar' in root
    assert root['/foo/bar'].metadata.fruit == 'apple'
    assert root['/foo/bar'].metadata.colour == 'red'
    assert np.array_equal(root.accuracy['epsilon'], [0.1, 0.2, 0.0, 0.3])
    assert np.array_equal(root['/foo/bar']['y'], -np.arange(20))

    with pytest.raises(FileExistsError):
        io.ReportWriter(file)
    remove(file)


def test_write_overwrite_is_reproducible():
    file = gettempdir() + '/rfadvq-writer-overwrite.json'
    remove(file)
    contents = []
    for _ in range(2):
        w = io.ReportWriter(file, overwrite=True)
        w.add_metadata(seed=1)
        w.initialize('a', 'b', name='t')
        w.append(1.5, 2.5)
        w.write()
        with open(file, encoding='utf-8') as fp:
            contents.append(fp.read())
    assert contents[0] == contents[1]
    remove(file)


def test_writer_errors():
    w = io.ReportWriter(gettempdir() + '/rfadvq-writer-errors.json', overwrite=True)
    with pytest.raises(ValueError, match=r'has not been initialized'):
        w.append(1, 2)
    with pytest.raises(ValueError, match=r'has not been initialized'):
        w.data(name='missing')
    with pytest.raises(ValueError, match=r'len\(header\)'):
        w.initialize('a', 'b', types=[float])
    w.initialize('a')
    with pytest.raises(ValueError, match=r'already exists'):
        w.initialize('a')


def test_dataset_round_trip(tmp_path, dataset):
    file = os.path.join(tmp_path, 'data', 'test.rfds')
    io.save_dataset(file, dataset, meta={'split': 'test'})
    assert os.path.getsize(file) == 16 + 5 * (1 + 8 * WINDOW)
    loaded = io.load_dataset(file)
    assert np.array_equal(loaded.x, dataset.x)
    assert np.array_equal(loaded.labels, dataset.labels)
    assert loaded.std == 0.42
    assert loaded.meta == {'seed': 7, 'schemes': ['ASK4'], 'split': 'test'}
    with pytest.raises(FileExistsError):
        io.save_dataset(file, dataset)
    io.save_dataset(file, dataset, overwrite=True)


def test_dataset_without_sidecar(tmp_path, dataset):
    file = os.path.join(tmp_path, 'test.rfds')
    io.save_dataset(file, dataset)
    os.remove(io.sidecar(file))
    loaded = io.load_dataset(file)
    assert loaded.std == pytest.approx(float(np.std(dataset.x, dtype=np.float64)))
    assert loaded.meta == {}


def test_dataset_bad_magic(tmp_path):
    file = os.path.join(tmp_path, 'bad.rfds')
    with open(file, mode='wb') as fp:
        fp.write(b'RFNN' + bytes(12))
    with pytest.raises(io.FormatError, match=r'not a RFDS file'):
        io.load_dataset(file)


def test_dataset_unsupported_version(tmp_path, dataset):
    file = os.path.join(tmp_path, 'v2.rfds')
    io.save_dataset(file, dataset)
    with open(file, mode='r+b') as fp:
        fp.seek(4)
        fp.write(struct.pack('<I', 2))
    with pytest.raises(io.UnsupportedVersionError, match=r'version 2'):
        io.load_dataset(file)
    assert issubclass(io.UnsupportedVersionError, io.FormatError)


@pytest.mark.parametrize('size', [3, 10, 16 + 100])
def test_dataset_truncated(tmp_path, dataset, size):
    file = os.path.join(tmp_path, 'truncated.rfds')
    io.save_dataset(file, dataset)
    with open(file, mode='rb') as fp:
        data = fp.read()
    with open(file, mode='wb') as fp:
        fp.write(data[:size])
    with pytest.raises(io.FormatError, match=r'truncated|bytes'):
        io.load_dataset(file)


def test_checkpoint_round_trip(tmp_path):
    file = os.path.join(tmp_path, 'model.rfnn')
    arrays = {'dense.weight': np.arange(12, dtype=np.float64).reshape(3, 4) / 7,
              'dense.bias': np.array([0.5, -1.5, 2.0])}
    graphs = {'g': {'input_shape': [4], 'nodes': [{'name': 'dense', 'type': 'Dense'}]}}
    io.save_checkpoint(file, graphs, arrays, metadata={'epochs': 3})
    g, a, m = io.load_checkpoint(file)
    assert g == graphs
    assert m == {'epochs': 3}
    assert list(a) == ['dense.weight', 'dense.bias']
    assert a['dense.weight'].dtype == np.float32
    assert np.array_equal(a['dense.weight'], arrays['dense.weight'].astype(np.float32))
    assert np.array_equal(a['dense.bias'], arrays['dense.bias'])


def test_checkpoint_errors(tmp_path):
    file = os.path.join(tmp_path, 'model.rfnn')
    io.save_checkpoint(file, {}, {'w': np.ones((2, 2))})
    with open(file, mode='rb') as fp:
        data = fp.read()

    with open(file, mode='wb') as fp:
        fp.write(data[:-4])
    with pytest.raises(io.FormatError, match=r"block 'w' is incomplete"):
        io.load_checkpoint(file)

    with open(file, mode='wb') as fp:
        fp.write(data + b'\x00')
    with pytest.raises(io.FormatError, match=r'trailing bytes'):
        io.load_checkpoint(file)

    with open(file, mode='wb') as fp:
        fp.write(b'RFNN' + struct.pack('<I', 9) + data[8:])
    with pytest.raises(io.UnsupportedVersionError):
        io.load_checkpoint(file)

    with open(file, mode='wb') as fp:
        fp.write(data[:10])
    with pytest.raises(io.FormatError, match=r'descriptor table'):
        io.load_checkpoint(file)


def test_tokens(tmp_path):
    file = os.path.join(tmp_path, 'tokens.u8')
    tokens = np.random.default_rng(1).integers(0, 128, size=(3, 64))
    io.save_tokens(file, tokens)
    assert os.path.getsize(file) == 3 * 64
    assert np.array_equal(io.load_tokens(file), tokens)
    with pytest.raises(FileExistsError):
        io.save_tokens(file, tokens)
    with pytest.raises(ValueError, match=r'shape \(N, 64\)'):
        io.save_tokens(file, tokens[:, :10], overwrite=True)
    with pytest.raises(ValueError, match=r'uint8'):
        io.save_tokens(file, tokens + 200, overwrite=True)
    with open(file, mode='ab') as fp:
        fp.write(b'\x01')
    with pytest.raises(io.FormatError, match=r'not a multiple of 64'):
        io.load_tokens(file)


def test_json_and_csv(tmp_path):
    file = os.path.join(tmp_path, 'a', 'b.json')
    io.save_json(file, {'b': 1, 'a': [1.5, None]})
    with open(file, encoding='utf-8') as fp:
        text = fp.read()
    assert text.index('"a"') < text.index('"b"')
    assert io.load_json(file) == {'a': [1.5, None], 'b': 1}
    with pytest.raises(FileExistsError):
        io.save_json(file, {}, overwrite=False)

    csv = os.path.join(tmp_path, 'c', 'd.csv')
    io.save_csv(csv, pd.DataFrame({'x': [1, 2], 'y': [0.1, 1 / 3]}))
    with open(csv, encoding='utf-8') as fp:
        assert fp.read() == 'x,y\n1,0.1\n2,0.3333333333\n'
