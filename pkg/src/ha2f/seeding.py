"""Purpose-labelled seed derivation.

Every random stream in the package is derived from a root seed plus a
label such as ``"init"`` or ``"augment"`` and optional integer keys, so two
consumers never share a stream by accident.
"""
import zlib

import numpy as np
import torch


def _label_key(purpose):
    return zlib.crc32(purpose.encode("utf-8"))


def seed_sequence(seed, purpose, *keys):
    return np.random.SeedSequence(int(seed), spawn_key=(_label_key(purpose), *map(int, keys)))


def rng(seed, purpose, *keys):
    """numpy Generator for ``(seed, purpose, *keys)``."""
    return np.random.default_rng(seed_sequence(seed, purpose, *keys))


def derive(seed, purpose, *keys):
    """A 63-bit integer seed for libraries that want a plain int."""
    return int(seed_sequence(seed, purpose, *keys).generate_state(2, np.uint64)[0] >> np.uint64(1))


def torch_generator(seed, purpose, *keys):
    g = torch.Generator()
    g.manual_seed(derive(seed, purpose, *keys))
    return g
