"""One-clean-qubit communication protocols: simulation, transforms, costs."""

__version__ = "0.1.0"
