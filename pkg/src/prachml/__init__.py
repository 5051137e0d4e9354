"""Link-level LTE PRACH simulation with threshold, logistic and neural detectors."""

__version__ = "0.1.0"
