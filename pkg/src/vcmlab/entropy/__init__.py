from .bitstream import HEADER_SIZE, Bitstream, Header, decode_latents, encode_latents
from .factorized import FactorizedPrior
from .laplace import P_MIN, SIGMA_MIN, EntropyParameters, RateEstimate, estimate_rate_bits, laplace_bin_probability


def bits_per_pixel(total_bits: float, width: int, height: int) -> float:
    """Bits divided by the original (uncropped, unpadded) pixel count."""
    if width <= 0 or height <= 0:
        raise ValueError(f"zero-area image {width}x{height}")
    return total_bits / (width * height)


__all__ = [
    "HEADER_SIZE", "Bitstream", "Header", "decode_latents", "encode_latents", "FactorizedPrior", "P_MIN",
    "SIGMA_MIN", "EntropyParameters", "RateEstimate", "estimate_rate_bits", "laplace_bin_probability",
    "bits_per_pixel",
]
