"""Energy-penalty error suppression for encoded Hamiltonian computation."""

__version__ = "0.1.0"
