"""Impulsive-noise monitoring toolkit: soundscape synthesis, acoustic
indicators, window classifiers, event decoding and a regulation-aware
activity logbook for shooting-range noise."""

__version__ = "0.1.0"
