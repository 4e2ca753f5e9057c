"""Hemicycle: asymptotics of Dulac maps for D-systems with saddles at infinity."""

__version__ = "0.1.0"
