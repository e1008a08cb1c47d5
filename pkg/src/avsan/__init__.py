"""Audio-visual sound source localization that learns from silence and noise."""

__version__ = "0.1.0"
