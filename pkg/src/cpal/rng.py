"""Seeded random streams.

Every random draw in the package goes through :func:`stream`, which builds a
``numpy.random.Generator`` on the Philox-4x64 counter-based bit generator.
The key is derived from ``(seed, *labels)`` with ``numpy.random.SeedSequence``
so separate purposes (pattern sampling, data splits, hit-and-run chains) get
independent, reproducible streams.  Normal variates use numpy's ziggurat
transform (``Generator.standard_normal``).
"""

from __future__ import annotations

import zlib

import numpy as np


def _label_key(label) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label) & 0xFFFFFFFF
    return zlib.crc32(str(label).encode("utf-8"))


def stream(seed: int, *labels) -> np.random.Generator:
    """Return an independent Philox generator for ``seed`` and a purpose path."""
    if seed is None:
        raise ValueError("a fixed integer seed is required")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_label_key(x) for x in labels))
    return np.random.Generator(np.random.Philox(ss))
