import logging
import os
import struct
from typing import Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd

from core.exceptions import DataError
from core.interfaces import IDataHandler
from core.tensor import DenseTensor

logger = logging.getLogger(__name__)

MAGIC = b"LSTT"
DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
CODE_DTYPES = {code: dtype for dtype, code in DTYPE_CODES.items()}


def encode_tensor(array: np.ndarray) -> bytes:
    """Portable tensor record: magic, dtype code, rank, little-endian u32 dims, row-major payload"""
    array = np.asarray(array)
    if array.dtype not in DTYPE_CODES:
        raise DataError(f"Only f32/f64 tensors can be stored, got {array.dtype}")
    header = MAGIC + struct.pack("<BB", DTYPE_CODES[array.dtype], array.ndim)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    payload = np.ascontiguousarray(array, dtype=array.dtype.newbyteorder("<")).tobytes()
    return header + payload


def decode_tensor(buffer: bytes, offset: int = 0) -> Tuple[np.ndarray, int]:
    """Parse one record starting at ``offset``; returns the array and the offset after it"""
    if buffer[offset:offset + 4] != MAGIC:
        raise DataError("Not a portable tensor record (bad magic)")
    try:
        code, rank = struct.unpack_from("<BB", buffer, offset + 4)
        dims = struct.unpack_from(f"<{rank}I", buffer, offset + 6)
    except struct.error as exc:
        raise DataError(f"Truncated tensor header: {exc}")
    if code not in CODE_DTYPES:
        raise DataError(f"Unknown tensor dtype code {code}")
    dtype = CODE_DTYPES[code].newbyteorder("<")
    start = offset + 6 + 4 * rank
    count = int(np.prod(dims)) if rank else 1
    end = start + count * dtype.itemsize
    if end > len(buffer):
        raise DataError(f"Truncated tensor payload: need {end - start} bytes, have {len(buffer) - start}")
    array = np.frombuffer(buffer, dtype=dtype, count=count, offset=start).reshape(dims)
    return array.astype(CODE_DTYPES[code]), end


def _read_bytes(source: str) -> bytes:
    try:
        with open(source, "rb") as handle:
            return handle.read()
    except OSError as exc:
        raise DataError(f"Could not read {source}: {exc}")


def _write_bytes(data: bytes, destination: str) -> None:
    try:
        directory = os.path.dirname(destination)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(destination, "wb") as handle:
            handle.write(data)
    except OSError as exc:
        raise DataError(f"Could not write {destination}: {exc}")


class LsttTensorHandler(IDataHandler):
    """Handles portable tensor files (Single Responsibility Principle)"""

    def load_data(self, source: str) -> np.ndarray:
        """Load one tensor file

        Args:
            source: File path to load

        Returns:
            The stored array with its stored dtype
        """
        buffer = _read_bytes(source)
        array, end = decode_tensor(buffer)
        if end != len(buffer):
            raise DataError(f"{source}: {len(buffer) - end} trailing bytes after tensor")
        return array

    def save_data(self, data: Union[np.ndarray, DenseTensor], destination: str) -> bool:
        """Save one tensor (array or DenseTensor) to a file"""
        array = data.data if isinstance(data, DenseTensor) else np.asarray(data)
        _write_bytes(encode_tensor(array), destination)
        return True


class CheckpointHandler(IDataHandler):
    """Handles named tensor collections: u16 name length, name bytes, tensor record; sorted by name"""

    def load_data(self, source: str) -> Dict[str, np.ndarray]:
        buffer = _read_bytes(source)
        arrays: Dict[str, np.ndarray] = {}
        offset = 0
        while offset < len(buffer):
            try:
                (length,) = struct.unpack_from("<H", buffer, offset)
            except struct.error:
                raise DataError(f"{source}: truncated record name")
            name = buffer[offset + 2:offset + 2 + length].decode("utf-8")
            arrays[name], offset = decode_tensor(buffer, offset + 2 + length)
        logger.debug("Loaded %d tensors from %s", len(arrays), source)
        return arrays

    def save_data(self, data: Dict[str, np.ndarray], destination: str) -> bool:
        chunks = []
        for name in sorted(data):
            encoded = name.encode("utf-8")
            if len(encoded) > 0xFFFF:
                raise DataError(f"Tensor name too long: {name[:40]}...")
            chunks.append(struct.pack("<H", len(encoded)) + encoded + encode_tensor(data[name]))
        _write_bytes(b"".join(chunks), destination)
        logger.debug("Saved %d tensors to %s", len(data), destination)
        return True


class ReportHandler(IDataHandler):
    """Handles tab-separated tables and ``key=value`` report files"""

    def __init__(self, separator: str = "\t"):
        self.separator = separator

    def load_data(self, source: str) -> Optional[pd.DataFrame]:
        try:
            return pd.read_csv(source, sep=self.separator)
        except (OSError, pd.errors.ParserError) as exc:
            raise DataError(f"Could not load table {source}: {exc}")

    def save_data(self, data: pd.DataFrame, destination: str) -> bool:
        try:
            directory = os.path.dirname(destination)
            if directory:
                os.makedirs(directory, exist_ok=True)
            data.to_csv(destination, sep=self.separator, index=False, float_format="%.6g")
            return True
        except OSError as exc:
            raise DataError(f"Could not save table {destination}: {exc}")

    def save_key_values(self, values: Dict[str, str], destination: str) -> bool:
        """Write ``key=value`` pairs on one line, space separated"""
        line = " ".join(f"{key}={value}" for key, value in values.items()) + "\n"
        _write_bytes(line.encode("utf-8"), destination)
        return True

    def load_key_values(self, source: str) -> Dict[str, str]:
        text = _read_bytes(source).decode("utf-8")
        return dict(token.split("=", 1) for token in text.split() if "=" in token)
