"""Phase reconstruction from STFT magnitudes: Griffin-Lim and a GAN-refined variant."""

__version__ = "0.1.0"
