from .._haar import BAND_NAMES, Subbands, haar_decompose, haar_reconstruct

__all__ = ["BAND_NAMES", "Subbands", "haar_decompose", "haar_reconstruct"]
