"""Differential-IQC gain certification for uncertain polynomial systems.

Submodules:
  poly      exact multivariate polynomials and polynomial matrices
  linalg    Schur / Riccati / spectral factorization / H-infinity kernels
  lti       state-space realizations and J-spectral factorization
  iqc       differential-IQC multiplier library
  diffsys   differential dynamics and filter-extended plants
  sosp      SOS compilation of polynomial matrix inequalities
  conic     semidefinite programming with verified solutions
  analysis  gain-bound LMI assembly, certification, metric synthesis
  sim       time-domain validation of certificates
  cli       command-line front end and model files
"""

__version__ = "0.1.0"
