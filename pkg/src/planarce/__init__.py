"""Simulation and estimation toolkit for time-varying MIMO-OFDM uplink
channel estimation.

The pipeline: simulate doubly-selective multipath channels for K users
(:mod:`planarce.channel`), superimpose them on the pilot grid with noise
(:mod:`planarce.rxmodel`), estimate per-sub-block planar channel models by
LMMSE (:mod:`planarce.planar`), optionally refine and interpolate with a
dilated residual convolutional network (:mod:`planarce.network`), and
benchmark against classical baselines (:mod:`planarce.baselines`,
:mod:`planarce.evaluate`).
"""

__version__ = "0.1.0"
