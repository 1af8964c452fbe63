"""Citation dataset production for DBLP papers that lack DOIs."""

__version__ = "0.1.0"
