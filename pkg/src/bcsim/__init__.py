"""Monte Carlo microsimulation of breast cancer costs and deaths under lockdowns."""

__version__ = "0.1.0"
