"""Two-tone backaction-evading optomechanical measurement: spectra, fits and budgets."""

__version__ = "0.1.0"
