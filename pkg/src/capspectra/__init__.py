"""Photoelectron spectra of grid hydrogen from flux absorbed by a complex
absorbing potential: split-operator propagation during the pulse plus a
closed-form non-Hermitian eigenbasis sum for the time after it.

Submodules: core (types, config), hamiltonian (operator blocks and dipole
coupling), propagator (time stepping, checkpoints), continuum (Coulomb
waves and phases), analysis (accumulators, eigendecomposition, spectra),
cli (subcommands).
"""

__version__ = "0.1.0"

__all__ = ["__version__"]
