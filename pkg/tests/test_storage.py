"""Portable tensor files, checkpoints and report tables."""
import struct

import numpy as np
import pandas as pd
import pytest

from core.exceptions import DataError
from core.tensor import DenseTensor
from utils.data_handler import CheckpointHandler, LsttTensorHandler, ReportHandler, decode_tensor, encode_tensor


def test_tensor_record_layout():
    record = encode_tensor(np.arange(6, dtype=np.float32).reshape(2, 3))
    assert record[:4] == b"LSTT"
    assert record[4:6] == bytes([0, 2])
    assert record[6:14] == struct.pack("<2I", 2, 3)
    assert record[14:] == np.arange(6, dtype="<f4").tobytes()


def test_values_survive_bit_exact(tmp_path):
    values = np.array([0.1, -0.0, 5e-324, 1e308, np.pi])
    path = str(tmp_path / "t.lst")
    LsttTensorHandler().save_data(DenseTensor(values), path)
    loaded = LsttTensorHandler().load_data(path)
    assert loaded.dtype == np.float64
    assert np.array_equal(loaded.view(np.uint64), values.view(np.uint64))


def test_scalar_record():
    array, end = decode_tensor(encode_tensor(np.asarray(2.5)))
    assert array.shape == () and float(array) == 2.5 and end == 6 + 8


@pytest.mark.parametrize("mutate", [
    lambda b: b + b"\x00",
    lambda b: b[:-1],
    lambda b: b"XXXX" + b[4:],
    lambda b: b[:4] + bytes([7]) + b[5:],
])
def test_corrupt_files_are_rejected(tmp_path, mutate):
    path = tmp_path / "bad.lst"
    path.write_bytes(mutate(encode_tensor(np.ones((2, 2)))))
    with pytest.raises(DataError):
        LsttTensorHandler().load_data(str(path))


def test_integer_arrays_are_rejected():
    with pytest.raises(DataError):
        encode_tensor(np.arange(3))


def test_checkpoint_records_are_sorted_by_name(tmp_path):
    path = str(tmp_path / "c.ckpt")
    CheckpointHandler().save_data({"zeta": np.ones(1), "alpha": np.zeros((2, 2), dtype=np.float32)}, path)
    raw = (tmp_path / "c.ckpt").read_bytes()
    assert raw[:7] == struct.pack("<H", 5) + b"alpha"
    loaded = CheckpointHandler().load_data(path)
    assert list(loaded) == ["alpha", "zeta"]
    assert loaded["alpha"].dtype == np.float32


def test_missing_file(tmp_path):
    with pytest.raises(DataError):
        CheckpointHandler().load_data(str(tmp_path / "none.ckpt"))


def test_report_files(tmp_path):
    handler = ReportHandler()
    handler.save_data(pd.DataFrame([{"variant": "+mae", "R1": 0.123456789}]), str(tmp_path / "out" / "r.tsv"))
    assert (tmp_path / "out" / "r.tsv").read_text().splitlines() == ["variant\tR1", "+mae\t0.123457"]
    handler.save_key_values({"R1": "0.500000", "valid": "4"}, str(tmp_path / "r.txt"))
    assert (tmp_path / "r.txt").read_text() == "R1=0.500000 valid=4\n"
    assert handler.load_key_values(str(tmp_path / "r.txt")) == {"R1": "0.500000", "valid": "4"}
