"""First-passage densities and boundary sensitivities for 1D diffusions."""

__version__ = "0.1.0"
