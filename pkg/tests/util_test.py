from mongeflow import util
from mongeflow.errors import ArtifactError
import json
import numpy as np
import pytest


def test_split_sizes():
    assert util.split_sizes(10, 4) == [4, 4, 2]
    assert util.split_sizes(8, 4) == [4, 4]
    assert util.split_sizes(0, 4) == []


def test_parallel_map_keeps_order():
    assert util.parallel_map(lambda x: x * x, range(20), workers=4) == [x * x for x in range(20)]


def test_jsonify():
    d = util.jsonify({'a': np.arange(3), 'b': np.float64(np.nan), 'c': (np.int64(2), np.inf), 1: True})
    assert d == {'a': [0, 1, 2], 'b': None, 'c': [2, None], '1': True}


def test_json_round_trip(tmp_path):
    path = tmp_path / 'x.json'
    util.dump_json({'z': 1.5, 'a': np.ones(2)}, path)
    assert util.load_json(path) == {'a': [1., 1.], 'z': 1.5}
    assert path.read_text().index('"a"') < path.read_text().index('"z"')


def test_load_json_errors(tmp_path):
    path = tmp_path / 'bad.json'
    path.write_text('{\n  "a": 1,\n  oops\n}\n')
    with pytest.raises(ArtifactError, match='line 3'):
        util.load_json(path)
    with pytest.raises(ArtifactError):
        util.load_json(tmp_path / 'missing.json')


def test_sha256(tmp_path):
    path = tmp_path / 'f.bin'
    path.write_bytes(b'abc')
    assert util.sha256_file(path) == 'ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad'
