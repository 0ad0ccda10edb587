"""Simulation and spectral analysis of an age-dependent mean-field spin system.

Modules: ``model`` (parameters, hazard and survival laws), ``particle_sim``
(exact event-driven N-particle dynamics and the coupling harness),
``meanfield_pde`` (density solver and the Curie-Weiss ODE), ``spectral``
(eigenvalue functions, roots, Hopf crossing), ``analysis`` (phase
classification, sweeps) and ``cli``.
"""

__version__ = "0.1.0"

from .model import ModelParams, ParticleState, SystemState  # noqa: E402,F401
