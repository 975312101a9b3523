"""Named, hierarchical random streams.

Every random draw in the package flows from one master seed through a
named path (e.g. ``stream(seed, "epi", run, loc)``).  Paths are hashed
with SHA-256, so streams are independent of each other, of process
layout, and of evaluation order; this is what makes ``--jobs N``
numerically invisible.
"""

from __future__ import annotations

import hashlib

import numpy as np

_PATH_SEP = b"\x1f"


def _entropy(master_seed: int, path: tuple) -> list[int]:
    h = hashlib.sha256()
    h.update(str(int(master_seed)).encode())
    for part in path:
        h.update(_PATH_SEP)
        if isinstance(part, (int, np.integer)):
            h.update(b"i" + str(int(part)).encode())
        elif isinstance(part, str):
            h.update(b"s" + part.encode())
        else:
            raise TypeError(f"stream path parts must be str or int, got {type(part).__name__}")
    digest = h.digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 32, 4)]


def stream(master_seed: int, *path) -> np.random.Generator:
    """Return a Generator for the (seed, *path) stream.

    The same (seed, path) always yields the same stream; distinct paths
    yield independent streams.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(_entropy(master_seed, path))))


def substream_seed(master_seed: int, *path) -> int:
    """Derive a 63-bit child seed, for handing a whole subtree to a job."""
    ent = _entropy(master_seed, path)
    return (ent[0] | (ent[1] << 32)) & 0x7FFF_FFFF_FFFF_FFFF
