"""Ricci-flow geometric sequences, an LSTM edge scorer and curvature-aware GCNs."""

__version__ = "0.1.0"
