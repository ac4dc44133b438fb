"""Numerical laboratory for quantum ergodic restriction on billiards and the modular surface."""

from __future__ import annotations

__version__ = "0.1.0"
