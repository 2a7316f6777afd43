from .model import ALIGN, MIN_SIDE, HyperpriorCodec, NetworkConfig, latent_dims, padded_dims, state_fingerprint
from .pipeline import compress, decompress, load_codec, save_codec
from .quantize import quantize_infer, quantize_train

__all__ = [
    "ALIGN", "MIN_SIDE", "HyperpriorCodec", "NetworkConfig", "latent_dims", "padded_dims", "state_fingerprint",
    "compress", "decompress", "load_codec", "save_codec", "quantize_infer", "quantize_train",
]
