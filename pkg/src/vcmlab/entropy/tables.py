"""Deterministic integer coding tables and symbol-level coding with escapes.

A table covers integer values ``lo..hi``; two extra escape symbols carry
the probability mass below ``lo`` and above ``hi``. Escaped values are
followed by an order-0 Exp-Golomb code of their distance to the table
edge, written as bypass bits. Values outside ``[-MAX_ABS, MAX_ABS]`` are
rejected.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from ..errors import CorruptStreamError, SymbolOutOfAlphabetError
from .laplace import SIGMA_MIN, laplace_pmf_table
from .rangecoder import RangeDecoder, RangeEncoder, cumulative, quantize_pmf

MAX_ABS = 255
TAIL_MASS = 2.0 ** -14
SIGMA_MAX = 64.0
NUM_SCALES = 256


@dataclass(frozen=True)
class CodingTable:
    lo: int
    hi: int
    cum: list  # len hi - lo + 4: [0, esc_lo, lo..hi, esc_hi]

    @property
    def esc_lo(self) -> int:
        return 0

    @property
    def esc_hi(self) -> int:
        return self.hi - self.lo + 2


def table_from_pmf(pmf_full: Sequence[float], lo: int, hi: int) -> CodingTable:
    """Build a table from a pmf over ``[-MAX_ABS, MAX_ABS]`` plus two escape bins.

    Mass outside ``lo..hi`` is folded into the escape bins.
    """
    pmf_full = np.asarray(pmf_full, dtype=np.float64)
    body = pmf_full[1:-1]
    i0, i1 = lo + MAX_ABS, hi + MAX_ABS
    pmf = np.concatenate([[pmf_full[0] + body[:i0].sum()], body[i0:i1 + 1], [pmf_full[-1] + body[i1 + 1:].sum()]])
    freq = quantize_pmf(pmf)
    return CodingTable(lo, hi, cumulative(freq)[0])


def support_from_pmf(pmf_full: Sequence[float], tail: float = TAIL_MASS) -> tuple[int, int]:
    """Smallest ``lo..hi`` leaving at most ``tail`` mass on each side."""
    pmf_full = np.asarray(pmf_full, dtype=np.float64)
    c = np.cumsum(pmf_full)
    values = np.arange(-MAX_ABS, MAX_ABS + 1)
    # c[i] is the mass up to and including body value values[i-1]
    below = c[:-2]          # mass strictly below values[j]
    above = 1.0 - c[1:-1]   # mass strictly above values[j]
    lo_candidates = values[below <= tail]
    hi_candidates = values[above <= tail]
    lo = int(lo_candidates.max()) if lo_candidates.size else -MAX_ABS
    hi = int(hi_candidates.min()) if hi_candidates.size else MAX_ABS
    if lo > hi:
        lo, hi = hi, lo
    return lo, hi


def scale_table_values() -> np.ndarray:
    return np.geomspace(SIGMA_MIN, SIGMA_MAX, NUM_SCALES)


def scale_index(sigma: np.ndarray) -> np.ndarray:
    """Nearest table scale in log domain."""
    step = math.log(SIGMA_MAX / SIGMA_MIN) / (NUM_SCALES - 1)
    idx = np.rint((np.log(np.asarray(sigma, dtype=np.float64)) - math.log(SIGMA_MIN)) / step)
    return np.clip(idx, 0, NUM_SCALES - 1).astype(np.int64)


@lru_cache(maxsize=1)
def laplace_tables() -> tuple[CodingTable, ...]:
    """Zero-mean Laplace residual tables, one per quantized scale."""
    tables = []
    for s in scale_table_values():
        pmf = laplace_pmf_table(float(s), MAX_ABS)
        # the residual tail beyond L is 0.5*exp(-(L+0.5)/s)
        half_width = math.ceil(s * math.log(0.5 / TAIL_MASS) - 0.5)
        half_width = min(MAX_ABS, max(1, half_width))
        tables.append(table_from_pmf(pmf, -half_width, half_width))
    return tuple(tables)


def _exp_golomb_encode(enc: RangeEncoder, n: int):
    m = n + 1
    k = m.bit_length() - 1
    enc.encode_bits(0, k)
    enc.encode_bits(m, k + 1)


def _exp_golomb_decode(dec: RangeDecoder) -> int:
    k = 0
    while dec.decode_bits(1) == 0:
        k += 1
        if k > 16:
            raise CorruptStreamError("runaway escape code")
    m = (1 << k) | dec.decode_bits(k)
    return m - 1


def encode_values(values: Sequence[int], table_index: Sequence[int], tables: Sequence[CodingTable]) -> bytes:
    """Range-code integer ``values[i]`` under ``tables[table_index[i]]``."""
    enc = RangeEncoder()
    for v, t in zip(values, table_index):
        tab = tables[t]
        cum = tab.cum
        if tab.lo <= v <= tab.hi:
            s = v - tab.lo + 1
            enc.encode(cum[s], cum[s + 1] - cum[s])
            continue
        if abs(v) > MAX_ABS:
            raise SymbolOutOfAlphabetError(f"value {v} outside [-{MAX_ABS}, {MAX_ABS}]")
        s = tab.esc_lo if v < tab.lo else tab.esc_hi
        enc.encode(cum[s], cum[s + 1] - cum[s])
        _exp_golomb_encode(enc, tab.lo - 1 - v if v < tab.lo else v - tab.hi - 1)
    return enc.finish()


def decode_values(data: bytes, table_index: Sequence[int], tables: Sequence[CodingTable]) -> list[int]:
    dec = RangeDecoder(data)
    out = []
    for t in table_index:
        tab = tables[t]
        s = dec.decode(tab.cum)
        if s == tab.esc_lo:
            out.append(tab.lo - 1 - _exp_golomb_decode(dec))
        elif s == tab.esc_hi:
            out.append(tab.hi + 1 + _exp_golomb_decode(dec))
        else:
            out.append(tab.lo + s - 1)
    return out
