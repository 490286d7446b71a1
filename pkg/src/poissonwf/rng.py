"""Splittable, reproducible random streams.

Every random operation in the package takes an :class:`RngStream` rather than a
live generator.  The stream is an immutable key; calling :meth:`RngStream.generator`
always yields a fresh generator in the same state, so operations are pure
functions of their arguments.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RngStream:
    """Key of an independent random stream.

    Parameters
    ----------
    master_seed : int
        Experiment-wide seed.
    stream_id : int
        Stream index under ``master_seed`` (the trial index in sweeps).
    path : tuple of int
        Sub-stream keys appended by :meth:`child`.
    """

    master_seed: int
    stream_id: int = 0
    path: tuple[int, ...] = ()

    def __post_init__(self):
        for v in (self.master_seed, self.stream_id, *self.path):
            if int(v) != v or v < 0 or v >= 2**64:
                raise ValueError(f"stream keys must be unsigned 64-bit integers, got {v!r}")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_id, *self.path))
        return np.random.Generator(np.random.PCG64(seq))

    def child(self, *keys: int) -> RngStream:
        return RngStream(self.master_seed, self.stream_id, self.path + tuple(keys))
