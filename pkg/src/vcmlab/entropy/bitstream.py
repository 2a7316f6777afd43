"""Bitstream container and latent encode/decode.

Layout (all integers big-endian)::

    offset  size  field
    0       4     magic b"VCMB"
    4       1     format version
    5       2     original height
    7       2     original width
    9       2     padded height
    11      2     padded width
    13      4     network config id (CRC-32 of the canonical config)
    17      8     model id (leading 8 bytes of the weight fingerprint)
    25      8     lambda tag (IEEE-754 double)
    33      4     len(b2)   followed by b2 (hyper latent)
    ..      4     len(b1)   followed by b1 (core latent)
    ..      4     CRC-32 of every preceding byte

The header is 33 bytes. b2 is decoded first because the core latent's
entropy parameters are predicted from the decoded hyper latent.
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np
import torch

from ..errors import CodingError, CorruptStreamError, ShapeMismatchError, VersionMismatchError
from .laplace import EntropyParameters
from .tables import MAX_ABS, CodingTable, decode_values, encode_values, laplace_tables, scale_index, support_from_pmf, table_from_pmf

MAGIC = b"VCMB"
FORMAT_VERSION = 1
_HEADER = struct.Struct(">4sBHHHHIQd")
HEADER_SIZE = _HEADER.size
_U32 = struct.Struct(">I")


@dataclass(frozen=True)
class Header:
    height: int
    width: int
    padded_height: int
    padded_width: int
    config_id: int
    model_id: int
    lam: float = 0.0
    version: int = FORMAT_VERSION

    def pack(self) -> bytes:
        return _HEADER.pack(MAGIC, self.version, self.height, self.width, self.padded_height,
                            self.padded_width, self.config_id, self.model_id, self.lam)


@dataclass(frozen=True)
class Bitstream:
    header: Header
    b1: bytes
    b2: bytes

    @property
    def bits_b1(self) -> int:
        return 8 * len(self.b1)

    @property
    def bits_b2(self) -> int:
        return 8 * len(self.b2)

    @property
    def payload_bits(self) -> int:
        return self.bits_b1 + self.bits_b2

    def to_bytes(self) -> bytes:
        body = b"".join([self.header.pack(), _U32.pack(len(self.b2)), self.b2, _U32.pack(len(self.b1)), self.b1])
        return body + _U32.pack(zlib.crc32(body))

    @classmethod
    def from_bytes(cls, data: bytes) -> "Bitstream":
        if len(data) < HEADER_SIZE + 12:
            raise CorruptStreamError(f"stream of {len(data)} bytes is shorter than the fixed framing")
        magic, version, h, w, ph, pw, cid, mid, lam = _HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise CorruptStreamError(f"bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise VersionMismatchError(f"bitstream format version {version}, expected {FORMAT_VERSION}")
        pos = HEADER_SIZE
        parts = []
        for name in ("b2", "b1"):
            if pos + 4 > len(data) - 4:
                raise CorruptStreamError(f"truncated before length of {name}")
            (n,) = _U32.unpack_from(data, pos)
            pos += 4
            if pos + n > len(data) - 4:
                raise CorruptStreamError(f"{name} declares {n} bytes but the stream is truncated")
            parts.append(data[pos:pos + n])
            pos += n
        if pos + 4 != len(data):
            raise CorruptStreamError("trailing bytes after b1")
        (crc,) = _U32.unpack_from(data, pos)
        if crc != zlib.crc32(data[:pos]):
            raise CorruptStreamError("checksum mismatch")
        header = Header(h, w, ph, pw, cid, mid, lam, version)
        return cls(header, b1=parts[1], b2=parts[0])


def factorized_tables(prior) -> list[CodingTable]:
    pmfs = prior.pmf_tables(MAX_ABS).numpy()
    return [table_from_pmf(p, *support_from_pmf(p)) for p in pmfs]


def _integers(v: torch.Tensor, what: str) -> list[int]:
    r = torch.round(v)
    if not torch.all(torch.abs(v - r) < 1e-3):
        raise CodingError(f"{what} are not integer valued; quantize before encoding")
    return r.to(torch.int64).flatten().tolist()


def _check_single(t: torch.Tensor, what: str):
    if t.dim() != 4 or t.shape[0] != 1:
        raise ShapeMismatchError(f"{what} must have shape (1, C, h, w), got {tuple(t.shape)}")


@torch.no_grad()
def encode_latents(y_hat: torch.Tensor, z_hat: torch.Tensor, params: EntropyParameters, prior, header: Header) -> Bitstream:
    """Range-code the core residuals ``y_hat - mu`` and the hyper latent ``z_hat``."""
    _check_single(y_hat, "y_hat")
    _check_single(z_hat, "z_hat")
    if y_hat.shape != params.mu.shape:
        raise ShapeMismatchError(f"y_hat {tuple(y_hat.shape)} vs parameters {tuple(params.mu.shape)}")
    z_vals = _integers(z_hat, "hyper latents")
    n_per_channel = z_hat.shape[2] * z_hat.shape[3]
    z_index = np.repeat(np.arange(z_hat.shape[1]), n_per_channel).tolist()
    b2 = encode_values(z_vals, z_index, factorized_tables(prior))

    residuals = _integers(y_hat - params.mu, "latent residuals")
    y_index = scale_index(params.sigma.double().flatten().numpy()).tolist()
    b1 = encode_values(residuals, y_index, laplace_tables())
    return Bitstream(header, b1=b1, b2=b2)


@torch.no_grad()
def decode_latents(bitstream: Bitstream, model) -> tuple[torch.Tensor, torch.Tensor]:
    """Invert :func:`encode_latents` using ``model``'s hyper-synthesis and prior."""
    hdr = bitstream.header
    if hdr.config_id != model.config.config_id or hdr.model_id != model.model_id():
        raise VersionMismatchError(
            f"stream written by model {hdr.model_id:016x}/config {hdr.config_id:08x}, "
            f"decoder has {model.model_id():016x}/{model.config.config_id:08x}")
    if hdr.padded_height % 16 or hdr.padded_width % 16:
        raise CorruptStreamError("padded dims are not multiples of 16")
    cfg = model.config
    h, w = hdr.padded_height // 16, hdr.padded_width // 16
    zh, zw = -(-h // 4), -(-w // 4)
    z_index = np.repeat(np.arange(cfg.hyper_channels), zh * zw).tolist()
    dtype = next(model.parameters()).dtype
    z_vals = decode_values(bitstream.b2, z_index, factorized_tables(model.prior))
    z_hat = torch.tensor(z_vals, dtype=dtype).reshape(1, cfg.hyper_channels, zh, zw)

    params = model.hyper_synthesize(z_hat, (h, w))
    y_index = scale_index(params.sigma.double().flatten().numpy()).tolist()
    residuals = decode_values(bitstream.b1, y_index, laplace_tables())
    r = torch.tensor(residuals, dtype=dtype).reshape(params.mu.shape)
    return r + params.mu, z_hat
