"""Report files of a run and the manifest that fingerprints them.

Numbers are written with 17 significant digits and JSON keys are sorted, so
two runs with the same seed and thread count produce identical bytes.

Binary matrices: ``b"PMAT"``, uint16 version, uint32 dim, then dim * dim
(re, im) float64 pairs in row-major order, all little-endian.
"""

import csv
import hashlib
import io
import json
import logging
import struct
from pathlib import Path

import numpy as np

from .errors import ArtifactError

logger = logging.getLogger(__name__)

MATRIX_MAGIC = b"PMAT"
MATRIX_VERSION = 1
_HEADER = struct.Struct('<4sHI')


def _plain(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, complex) or isinstance(value, np.complexfloating):
        return [float(value.real), float(value.imag)]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def dumps(data) -> str:
    return json.dumps(data, default=_plain, sort_keys=True, indent=2) + "\n"


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), '.17g')
    return str(value)


class ArtifactWriter:
    """Writes files under ``root`` and remembers them for the manifest."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files = []

    def _record(self, path):
        if path.name not in self.files:
            self.files.append(path.name)
        logger.debug(f"wrote {path}")
        return path

    def write_text(self, name, text):
        path = self.root / name
        path.write_text(text, encoding='utf-8', newline='\n')
        return self._record(path)

    def write_json(self, name, data):
        return self.write_text(name, dumps(data))

    def write_csv(self, name, header, rows):
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(value) for value in row])
        return self.write_text(name, buffer.getvalue())

    def write_bytes(self, name, data):
        path = self.root / name
        path.write_bytes(data)
        return self._record(path)

    def manifest(self, **meta):
        entries = []
        for name in sorted(self.files):
            payload = (self.root / name).read_bytes()
            entries.append({
                'path': name,
                'bytes': len(payload),
                'sha256': hashlib.sha256(payload).hexdigest(),
            })
        return {'files': entries, **meta}

    def write_manifest(self, **meta):
        manifest = self.manifest(**meta)
        path = self.root / 'manifest.json'
        path.write_text(dumps(manifest), encoding='utf-8', newline='\n')
        logger.info(f"manifest with {len(manifest['files'])} files at {path}")
        return manifest


def matrix_to_json(matrix) -> str:
    matrix = np.asarray(matrix, dtype=complex)
    return dumps({
        'dim': int(matrix.shape[0]),
        'entries_re': matrix.real.tolist(),
        'entries_im': matrix.imag.tolist(),
    })


def matrix_from_json(text) -> np.ndarray:
    data = json.loads(text)
    try:
        matrix = np.array(data['entries_re'], dtype=float) + 1j * np.array(data['entries_im'], dtype=float)
    except KeyError as e:
        raise ArtifactError(f"matrix JSON lacks {e}") from e
    if matrix.shape != (data['dim'], data['dim']):
        raise ArtifactError("matrix JSON shape differs from dim", dim=data['dim'], shape=matrix.shape)
    return matrix


def matrix_to_bytes(matrix) -> bytes:
    matrix = np.asarray(matrix, dtype=complex)
    return _HEADER.pack(MATRIX_MAGIC, MATRIX_VERSION, matrix.shape[0]) + matrix.astype('<c16').tobytes(order='C')


def matrix_from_bytes(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise ArtifactError("matrix payload shorter than header", size=len(data))
    magic, version, dim = _HEADER.unpack_from(data)
    if magic != MATRIX_MAGIC:
        raise ArtifactError("bad matrix magic", magic=magic)
    if version != MATRIX_VERSION:
        raise ArtifactError("unsupported matrix version", version=version)
    body = data[_HEADER.size:]
    if len(body) != 16 * dim * dim:
        raise ArtifactError("matrix payload length differs from dim", dim=dim, size=len(body))
    return np.frombuffer(body, dtype='<c16').reshape(dim, dim).astype(complex)
