"""
Artifact files: datasets, checkpoints, token dumps, manifests and reports.

All binary formats are little endian and start with a 4-byte magic and a
uint32 version number.
"""
import json
import os
import struct

import numpy as np
import pandas as pd
from msl.io import JSONWriter

from .log import logger
from .waveforms import Dataset
from .waveforms import WINDOW

DATASET_MAGIC = b'RFDS'
DATASET_VERSION = 1
CHECKPOINT_MAGIC = b'RFNN'
CHECKPOINT_VERSION = 1
TOKENS_PER_DATAPOINT = 64

_HEADER = struct.Struct('<4sI')
_DATASET_HEADER = struct.Struct('<4sIII')
_RECORD = np.dtype([('label', '<u1'), ('i', '<f4', (WINDOW,)), ('q', '<f4', (WINDOW,))])


class FormatError(ValueError):
    """A file is not of the expected format (bad magic, truncated, ...)."""


class UnsupportedVersionError(FormatError):
    """A file has a format version that this software cannot read."""


def _check_header(data: bytes, magic: bytes, version: int, file: str) -> None:
    if len(data) < _HEADER.size:
        raise FormatError(f'{file!r} is truncated, the header is incomplete')
    m, v = _HEADER.unpack_from(data)
    if m != magic:
        raise FormatError(f'{file!r} is not a {magic.decode()} file, magic={m!r}')
    if v != version:
        raise UnsupportedVersionError(f'{file!r} has {magic.decode()} version {v}, '
                                      f'only version {version} is supported')


def _prepare(file: str, overwrite: bool) -> None:
    if os.path.exists(file) and not overwrite:
        raise FileExistsError(f'Will not overwrite {file!r}')
    folder = os.path.dirname(file)
    if folder:
        os.makedirs(folder, exist_ok=True)


def sidecar(file: str) -> str:
    """The path of the JSON file that accompanies a binary artifact."""
    return f'{file}.json'


def save_json(file: str, obj: dict, *, overwrite: bool = True) -> None:
    """Write a JSON document with sorted keys (so equal objects give equal bytes)."""
    _prepare(file, overwrite)
    with open(file, mode='wt', encoding='utf-8') as fp:
        json.dump(obj, fp, indent=2, sort_keys=True, allow_nan=True)
        fp.write('\n')
    logger.debug(f'data written to {file}')


def load_json(file: str) -> dict:
    """Read a JSON document."""
    with open(file, encoding='utf-8') as fp:
        return json.load(fp)


def save_dataset(file: str, dataset: Dataset, *, overwrite: bool = False, meta: dict = None) -> None:
    """Write a dataset in the RFDS format and its metadata to a JSON sidecar.

    Args:
        file: The path of the file to create.
        dataset: The datapoints.
        overwrite: Whether an existing file may be replaced.
        meta: Additional metadata for the sidecar.
    """
    _prepare(file, overwrite)
    records = np.empty(len(dataset), dtype=_RECORD)
    records['label'] = dataset.labels
    records['i'] = dataset.x[:, 0, :]
    records['q'] = dataset.x[:, 1, :]
    with open(file, mode='wb') as fp:
        fp.write(_DATASET_HEADER.pack(DATASET_MAGIC, DATASET_VERSION, len(dataset), WINDOW))
        fp.write(records.tobytes())
    info = dict(dataset.meta)
    info.update(meta or {})
    info.update(count=len(dataset), std=dataset.std)
    save_json(sidecar(file), info)
    logger.debug(f'data written to {file}')


def load_dataset(file: str) -> Dataset:
    """Read a dataset in the RFDS format.

    If there is no JSON sidecar then the standard deviation is computed
    from the datapoints.
    """
    with open(file, mode='rb') as fp:
        data = fp.read()
    _check_header(data, DATASET_MAGIC, DATASET_VERSION, file)
    if len(data) < _DATASET_HEADER.size:
        raise FormatError(f'{file!r} is truncated, the header is incomplete')
    _, _, count, n = _DATASET_HEADER.unpack_from(data)
    if n != WINDOW:
        raise FormatError(f'{file!r} has datapoints of length {n}, expected {WINDOW}')
    expected = _DATASET_HEADER.size + count * _RECORD.itemsize
    if len(data) != expected:
        raise FormatError(f'{file!r} has {len(data)} bytes, expected {expected} for {count} records')
    records = np.frombuffer(data, dtype=_RECORD, count=count, offset=_DATASET_HEADER.size)
    x = np.stack((records['i'], records['q']), axis=1)
    meta = load_json(sidecar(file)) if os.path.isfile(sidecar(file)) else {}
    std = meta.pop('std', None)
    meta.pop('count', None)
    if std is None:
        std = float(np.std(x, dtype=np.float64)) if count else float('nan')
    return Dataset(x=x, labels=records['label'].copy(), std=float(std), meta=meta)


def save_checkpoint(file: str,
                    graphs: dict[str, dict],
                    arrays: dict[str, np.ndarray],
                    *,
                    metadata: dict = None,
                    overwrite: bool = False) -> None:
    """Write a model checkpoint in the RFNN format.

    The layout is the header, a uint32 length and a JSON descriptor table
    (graph descriptors, block names and shapes, metadata), then every
    block as float32 in the order of the table.

    Args:
        file: The path of the file to create.
        graphs: The graph descriptors, keyed by graph name. Each value
            has the keys ``input_shape`` and ``nodes``.
        arrays: The parameter blocks.
        metadata: Anything else that is JSON serializable.
        overwrite: Whether an existing file may be replaced.
    """
    _prepare(file, overwrite)
    blocks = [{'name': k, 'shape': list(v.shape)} for k, v in arrays.items()]
    table = json.dumps({'graphs': graphs, 'blocks': blocks, 'metadata': metadata or {}},
                       sort_keys=True).encode('utf-8')
    with open(file, mode='wb') as fp:
        fp.write(_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION))
        fp.write(struct.pack('<I', len(table)))
        fp.write(table)
        for value in arrays.values():
            fp.write(np.ascontiguousarray(value, dtype='<f4').tobytes())
    logger.debug(f'checkpoint written to {file}')


def load_checkpoint(file: str) -> tuple[dict[str, dict], dict[str, np.ndarray], dict]:
    """Read a model checkpoint in the RFNN format.

    Returns:
        The graph descriptors, the parameter blocks and the metadata.
    """
    with open(file, mode='rb') as fp:
        data = fp.read()
    _check_header(data, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, file)
    offset = _HEADER.size
    if len(data) < offset + 4:
        raise FormatError(f'{file!r} is truncated, the descriptor table is missing')
    (size,) = struct.unpack_from('<I', data, offset)
    offset += 4
    if len(data) < offset + size:
        raise FormatError(f'{file!r} is truncated, the descriptor table is incomplete')
    table = json.loads(data[offset:offset+size].decode('utf-8'))
    offset += size
    arrays: dict[str, np.ndarray] = {}
    for block in table['blocks']:
        shape = tuple(block['shape'])
        count = int(np.prod(shape, dtype=np.int64))
        if len(data) < offset + 4 * count:
            raise FormatError(f'{file!r} is truncated, block {block["name"]!r} is incomplete')
        arrays[block['name']] = np.frombuffer(data, dtype='<f4', count=count, offset=offset).reshape(shape).copy()
        offset += 4 * count
    if offset != len(data):
        raise FormatError(f'{file!r} has {len(data) - offset} unexpected trailing bytes')
    return table['graphs'], arrays, table['metadata']


def save_tokens(file: str, tokens: np.ndarray, *, overwrite: bool = False) -> None:
    """Write latent codes, shape (N, 64), as a flat uint8 array."""
    tokens = np.asarray(tokens)
    if tokens.ndim != 2 or tokens.shape[1] != TOKENS_PER_DATAPOINT:
        raise ValueError(f'Expected tokens of shape (N, {TOKENS_PER_DATAPOINT}), got {tokens.shape}')
    if tokens.size and (tokens.min() < 0 or tokens.max() > 255):
        raise ValueError('A token must be in [0, 255] to be stored as uint8')
    _prepare(file, overwrite)
    with open(file, mode='wb') as fp:
        fp.write(tokens.astype('<u1').tobytes())
    logger.debug(f'tokens written to {file}')


def load_tokens(file: str) -> np.ndarray:
    """Read latent codes that were written by :func:`save_tokens`."""
    data = np.fromfile(file, dtype='<u1')
    if data.size % TOKENS_PER_DATAPOINT:
        raise FormatError(f'{file!r} is truncated, {data.size} bytes is not a '
                          f'multiple of {TOKENS_PER_DATAPOINT}')
    return data.reshape(-1, TOKENS_PER_DATAPOINT)


def save_csv(file: str, frame: pd.DataFrame, *, overwrite: bool = True) -> None:
    """Write a table as CSV (no index column)."""
    _prepare(file, overwrite)
    frame.to_csv(file, index=False, float_format='%.10g', lineterminator='\n')
    logger.debug(f'table written to {file}')


class ReportWriter(JSONWriter):

    def __init__(self, file: str, *, overwrite: bool = False) -> None:
        """Collects tables of results and writes them to a JSON file.

        A table is created with :meth:`initialize` and rows are added with
        :meth:`append`. The output does not contain timestamps, so the same
        results always produce the same file.

        Args:
            file: The path of the file to create.
            overwrite: Whether an existing file may be replaced when :meth:`write` is called.
        """
        super().__init__(file=file)

        if os.path.isfile(file) and not overwrite:
            raise FileExistsError(f'Will not overwrite {file!r}')

        self._overwrite = overwrite
        self._name: str = ''
        self._meta: dict[str, dict] = {}
        self._indices: dict[str, int] = {}
        self._arrays: dict[str, np.ndarray] = {}

        # import here to avoid circular imports
        from rfadvq import __version__
        self.add_metadata(software_version=__version__)

    def append(self, *row, name: str = None) -> None:
        """Append a row to a table.

        Args:
            row: The values of the row, in the order of the header.
            name: The name of the table. If not specified then appends to
                the latest table that was initialized.
        """
        key = name or self._name
        if key not in self._arrays:
            raise ValueError(f'A table with name {key!r} has not been initialized')

        current_size = self._arrays[key].size
        if self._indices[key] >= current_size:
            # over-allocate proportional to the current size,
            # like CPython does for list.append
            append_size = current_size + 1
            new_size = (append_size + (append_size >> 3) + 6) & ~3
            self._arrays[key].resize(new_size, refcheck=False)

        self._arrays[key][self._indices[key]] = row
        self._indices[key] += 1
        logger.debug(f'appended {row} to {key!r}')

    def data(self, name: str = None) -> np.ndarray:
        """Return the current rows of a table.

        Args:
            name: The name of the table. If not specified then uses the name
                of the latest table that was initialized.
        """
        key = name or self._name
        if key not in self._arrays:
            raise ValueError(f'A table with name {key!r} has not been initialized')
        return self._arrays[key][:self._indices[key]]

    def frame(self, name: str = None) -> pd.DataFrame:
        """Return the current rows of a table as a :class:`pandas.DataFrame`."""
        return pd.DataFrame.from_records(self.data(name))

    def initialize(self,
                   *header: str,
                   name: str = 'table',
                   size: int = 16,
                   types: list = None,
                   **metadata) -> None:
        """Initialize a table.

        Args:
            *header: The names of the columns.
            name: The name of the table. Can contain ``/`` to specify a subgroup.
            size: The initial number of rows. The table grows when it needs to.
            types: The data type of each column. Default is `float` for each column.
            **metadata: The metadata to associate with the table.
        """
        if types is None:
            types = [float] * len(header)

        if len(header) != len(types):
            raise ValueError(f'len(header) [{len(header)}] != len(types) [{len(types)}]')

        if name in self._indices:
            raise ValueError(f'A {name!r} table already exists')

        self._name = name
        self._indices[name] = 0
        self._meta[name] = metadata
        self._arrays[name] = np.empty((size,), dtype=np.dtype(list(zip(header, types))))
        logger.debug(f'initialized a {name!r} table')

    def meta(self, name: str = None) -> dict:
        """Return the metadata of a table.

        Args:
            name: The name of the table. If not specified then uses the name
                of the latest table that was initialized.
        """
        key = name or self._name
        if key not in self._meta:
            raise ValueError(f'A table with name {key!r} has not been initialized')
        return self._meta[key]

    @property
    def tables(self) -> list[str]:
        """The names of the tables, in the order they were initialized."""
        return list(self._arrays)

    def update_metadata(self, name: str = None, **metadata) -> None:
        """Update the metadata of a table.

        Args:
            name: The name of the table. If not specified then uses
                the latest table that was initialized.
            **metadata: The metadata to associate with the table.
        """
        key = name or self._name
        if key not in self._meta:
            raise ValueError(f'A table with name {key!r} has not been initialized')
        self._meta[key].update(**metadata)

    def write(self, **kwargs) -> None:
        """Overrides the :meth:`~msl.io.writers.json_.JSONWriter.write` method."""
        for name, array in self._arrays.items():
            self.create_dataset(name, data=array[:self._indices[name]], **self._meta[name])
        file = kwargs.get('file') or self.file
        if self._overwrite and os.path.isfile(file):
            os.remove(file)
        folder = os.path.dirname(file)
        if folder:
            os.makedirs(folder, exist_ok=True)
        super().write(**kwargs)
        logger.debug(f'report written to {file}')
