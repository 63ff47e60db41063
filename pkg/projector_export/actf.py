"""Writer for the evaluation toolkit's ACTF tensor container.

Layout (little-endian throughout): magic "ACTF", u32 version=1,
u32 dtype (0 = f32), u32 ndim, ndim * u32 dims, then the raw f32
payload in row-major order.
"""

import struct

import numpy as np

MAGIC = b"ACTF"
VERSION = 1
DTYPE_F32 = 0


def write_actf(arr: np.ndarray, path) -> None:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    header = MAGIC + struct.pack(
        f"<III{arr.ndim}I", VERSION, DTYPE_F32, arr.ndim, *arr.shape
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(arr.tobytes())


def read_actf(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic")
    version, dtype, ndim = struct.unpack_from("<III", blob, 4)
    if version != VERSION or dtype != DTYPE_F32:
        raise ValueError(f"{path}: unsupported version/dtype")
    dims = struct.unpack_from(f"<{ndim}I", blob, 16)
    count = int(np.prod(dims))
    data = np.frombuffer(blob, dtype="<f4", count=count, offset=16 + 4 * ndim)
    return data.reshape(dims)
