"""siva: adversarially validated identification of equation-of-motion
coefficients from measured vibration data, with built-in uncertainty
quantification and a sparse-regression baseline."""

__version__ = "0.1.0"
