"""Residual-series reconstruction for radial single-coil MRI, desk scale.

Library layout:

- ``core``     numeric containers, counter-based RNG, on-disk formats
- ``traj``     golden-angle radial trajectories and acceleration factors
- ``nufft``    gridding measurement operator, kappa, PSF, spectral norms
- ``dcf``      Pipe-Menon density compensation weights
- ``sim``      phantoms, noisy k-space synthesis, back-projection
- ``dc``       data-consistency residuals (exact NUFFT and FFT/PSF modes)
- ``model``    toy U-Net with reverse-mode gradients, Adam, baselines
- ``engine``   residual-series inference loop and sequential training
- ``metrics``  SNR / logSNR / acceleration-ratio evaluation
- ``cli``      command-line front door
"""

__version__ = "0.1.0"

SCHEMA_VERSION = 1
