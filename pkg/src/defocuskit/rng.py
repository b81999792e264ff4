"""Deterministic random number generation.

Every stochastic step in the pipeline draws from an Rng derived from the
single seed in the config, so a fixed seed reproduces the whole run
bit-for-bit. Named child streams keep independent stages (data generation,
weight init, dropout, seeding) decoupled: adding draws to one stage does not
shift the stream of another.
"""

import hashlib

import numpy as np


def _tag_to_int(tag):
    digest = hashlib.blake2s(tag.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class Rng:
    """A seeded generator that can spawn named, independent substreams."""

    def __init__(self, seed):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    @property
    def generator(self):
        return self._gen

    def child(self, tag):
        """Derive an independent Rng keyed by (seed, tag)."""
        return Rng(np.random.SeedSequence([self.seed, _tag_to_int(tag)]).generate_state(1)[0])

    # convenience passthroughs
    def random(self, *args, **kwargs):
        return self._gen.random(*args, **kwargs)

    def integers(self, *args, **kwargs):
        return self._gen.integers(*args, **kwargs)

    def normal(self, *args, **kwargs):
        return self._gen.normal(*args, **kwargs)

    def uniform(self, *args, **kwargs):
        return self._gen.uniform(*args, **kwargs)

    def permutation(self, *args, **kwargs):
        return self._gen.permutation(*args, **kwargs)

    def choice(self, *args, **kwargs):
        return self._gen.choice(*args, **kwargs)
