import hashlib
import json
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from counting_lab.artifacts import (
    ArtifactWriter, dumps, matrix_from_bytes, matrix_from_json, matrix_to_bytes, matrix_to_json,
)
from counting_lab.errors import ArtifactError


class ArtifactWriterTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.writer = ArtifactWriter(Path(self.tmp.name) / 'run')

    def test_csv_uses_full_precision(self):
        rows = [[0.1, 3, True], [np.float64(2.5), np.int64(4), False]]
        path = self.writer.write_csv('sweep.csv', ['r', 'n_A', 'ok'], rows)
        self.assertEqual(path.read_text(), "r,n_A,ok\n0.10000000000000001,3,1\n2.5,4,0\n")

    def test_json_is_sorted_and_handles_numpy(self):
        text = dumps({'b': np.float64(0.5), 'a': np.arange(2), 'z': 1 + 2j, 'flag': np.bool_(True)})
        data = json.loads(text)
        self.assertEqual(list(data), ['a', 'b', 'flag', 'z'])
        self.assertEqual(data['z'], [1.0, 2.0])
        self.assertIs(data['flag'], True)

    def test_manifest_fingerprints_every_file(self):
        self.writer.write_json('bounds.json', {'passed': True})
        self.writer.write_text('notes.txt', 'x')
        manifest = self.writer.write_manifest(seed=3)
        self.assertEqual([entry['path'] for entry in manifest['files']], ['bounds.json', 'notes.txt'])
        payload = (self.writer.root / 'notes.txt').read_bytes()
        self.assertEqual(manifest['files'][1]['sha256'], hashlib.sha256(payload).hexdigest())
        self.assertEqual(manifest['seed'], 3)
        self.assertTrue((self.writer.root / 'manifest.json').exists())

    def test_rewrite_is_recorded_once(self):
        self.writer.write_text('a.txt', '1')
        self.writer.write_text('a.txt', '2')
        self.assertEqual(self.writer.files, ['a.txt'])


class MatrixCodecTests(SimpleTestCase):
    def setUp(self):
        self.matrix = np.array([[1 + 2j, -0.5], [3e-17j, 4.0]])

    def test_binary_layout(self):
        data = matrix_to_bytes(self.matrix)
        self.assertEqual(data[:4], b"PMAT")
        self.assertEqual(len(data), 10 + 16 * 4)
        np.testing.assert_array_equal(matrix_from_bytes(data), self.matrix)

    def test_json_keeps_every_bit(self):
        np.testing.assert_array_equal(matrix_from_json(matrix_to_json(self.matrix)), self.matrix)

    def test_bad_magic(self):
        data = b"XMAT" + matrix_to_bytes(self.matrix)[4:]
        with self.assertRaisesMessage(ArtifactError, "bad matrix magic"):
            matrix_from_bytes(data)

    def test_truncated_payload(self):
        with self.assertRaises(ArtifactError):
            matrix_from_bytes(matrix_to_bytes(self.matrix)[:-1])
        with self.assertRaises(ArtifactError):
            matrix_from_bytes(b"PM")

    def test_json_missing_field(self):
        with self.assertRaises(ArtifactError):
            matrix_from_json('{"dim": 1, "entries_re": [[1.0]]}')
