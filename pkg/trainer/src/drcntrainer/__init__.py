"""Training pipeline for the dilated residual channel-estimate denoiser.

Consumes training datasets and emits weight files in the same binary
formats the estimation toolkit reads; the two packages share no code,
only bytes.
"""

__version__ = "0.1.0"
