"""Byte-oriented integer range coder with carry propagation.

The state is a 32-bit ``range`` and a 33-bit ``low``; a pending byte plus a
run of 0xFF bytes is held back until the carry is resolved. Symbol
frequencies must sum to ``1 << PRECISION``.
"""
from __future__ import annotations

from bisect import bisect_right
from typing import Sequence

import numpy as np

PRECISION = 16
TOTAL = 1 << PRECISION
_TOP = 1 << 24
_MASK32 = 0xFFFFFFFF


def quantize_pmf(pmf, precision: int = PRECISION) -> np.ndarray:
    """Integer frequencies (each >= 1) summing to ``2**precision``.

    Rows of ``pmf`` are normalized, every symbol is granted one count, and the
    remaining budget is shared by the largest-remainder method with ties
    broken toward the lower index.
    """
    pmf = np.atleast_2d(np.asarray(pmf, dtype=np.float64))
    total = 1 << precision
    k = pmf.shape[1]
    if k > total:
        raise ValueError("alphabet larger than the frequency total")
    pmf = np.clip(pmf, 0.0, None)
    pmf = pmf / pmf.sum(axis=1, keepdims=True)
    budget = total - k
    raw = pmf * budget
    freq = np.floor(raw).astype(np.int64)
    short = budget - freq.sum(axis=1)
    order = np.argsort(-(raw - freq), axis=1, kind="stable")
    bonus = np.arange(k)[None, :] < short[:, None]
    rows = np.arange(pmf.shape[0])[:, None]
    freq[rows, order] += bonus
    return freq + 1


def cumulative(freq: np.ndarray) -> list[list[int]]:
    """Prefix sums (with a leading zero) of each frequency row, as Python lists."""
    freq = np.atleast_2d(freq)
    cum = np.zeros((freq.shape[0], freq.shape[1] + 1), dtype=np.int64)
    np.cumsum(freq, axis=1, out=cum[:, 1:])
    return cum.tolist()


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = _MASK32
        self._cache = 0
        self._cache_size = 1
        self._out = bytearray()

    def _shift_low(self):
        low = self.low
        if low < 0xFF000000 or low > _MASK32:
            carry = low >> 32
            temp = self._cache
            while True:
                self._out.append((temp + carry) & 0xFF)
                temp = 0xFF
                self._cache_size -= 1
                if not self._cache_size:
                    break
            self._cache = (low >> 24) & 0xFF
        self._cache_size += 1
        self.low = (low & 0x00FFFFFF) << 8

    def encode(self, start: int, freq: int):
        r = self.range >> PRECISION
        self.low += r * start
        self.range = r * freq
        while self.range < _TOP:
            self.range <<= 8
            self._shift_low()

    def encode_bits(self, value: int, nbits: int):
        """Equiprobable (bypass) bits, most significant first."""
        for i in range(nbits - 1, -1, -1):
            self.encode(((value >> i) & 1) << (PRECISION - 1), 1 << (PRECISION - 1))

    def finish(self) -> bytes:
        for _ in range(5):
            self._shift_low()
        return bytes(self._out)


class RangeDecoder:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0
        self.range = _MASK32
        self.code = 0
        for _ in range(5):
            self.code = ((self.code << 8) | self._next()) & _MASK32

    def _next(self) -> int:
        # reads past the end yield zeros; the container checksum catches truncation
        if self._pos < len(self._data):
            b = self._data[self._pos]
            self._pos += 1
            return b
        self._pos += 1
        return 0

    def decode(self, cum: Sequence[int]) -> int:
        r = self.range >> PRECISION
        value = min(self.code // r, TOTAL - 1)
        s = bisect_right(cum, value) - 1
        start = cum[s]
        self.code -= r * start
        self.range = r * (cum[s + 1] - start)
        while self.range < _TOP:
            self.code = ((self.code << 8) | self._next()) & _MASK32
            self.range <<= 8
        return s

    def decode_bits(self, nbits: int) -> int:
        half = [0, 1 << (PRECISION - 1), TOTAL]
        value = 0
        for _ in range(nbits):
            value = (value << 1) | self.decode(half)
        return value
