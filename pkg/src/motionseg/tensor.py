"""Dense 4-D tensor type used by every network computation.

Layout is (batch, channel, height, width), row-major and contiguous.
float32 is the working precision; float64 is accepted so the gradient
checker can run the same code paths at higher precision.
"""

from __future__ import annotations

import numpy as np

_ALLOWED_DTYPES = (np.float32, np.float64)


class ShapeError(ValueError):
    """Raised when tensor shapes do not satisfy an operation's contract."""


class Tensor:
    """A dense (n, c, h, w) array of reals.

    Thin wrapper over a contiguous numpy array; exists so that shape
    contracts are checked once, at construction, instead of inside every
    operation.
    """

    __slots__ = ("data",)

    def __init__(self, data: np.ndarray):
        arr = np.ascontiguousarray(data)
        if arr.ndim != 4:
            raise ShapeError(f"tensor must be 4-D (n,c,h,w), got shape {arr.shape}")
        if any(s < 1 for s in arr.shape):
            raise ShapeError(f"all tensor dims must be >= 1, got shape {arr.shape}")
        if arr.dtype not in _ALLOWED_DTYPES:
            arr = arr.astype(np.float32)
        self.data = arr

    # -- constructors -------------------------------------------------

    @classmethod
    def zeros(cls, n: int, c: int, h: int, w: int, dtype=np.float32) -> "Tensor":
        return cls(np.zeros((n, c, h, w), dtype=dtype))

    @classmethod
    def from_array(cls, arr, dtype=np.float32) -> "Tensor":
        return cls(np.asarray(arr, dtype=dtype))

    # -- accessors ----------------------------------------------------

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def c(self) -> int:
        return self.data.shape[1]

    @property
    def h(self) -> int:
        return self.data.shape[2]

    @property
    def w(self) -> int:
        return self.data.shape[3]

    @property
    def dtype(self):
        return self.data.dtype

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype))

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"
