"""Monte Carlo and exact checks of tail bounds for isotropic log-concave vectors."""

__version__ = "0.1.0"
