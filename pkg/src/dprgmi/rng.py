"""Labelled random substreams derived from one master seed.

Every consumer of randomness asks for ``substream(seed, tag, counter)``; the
stream seed is the first 8 bytes of a BLAKE2b digest of the triple, so streams
with different tags or counters never share state and adding a consumer never
shifts another one's draws.
"""

import hashlib

import numpy as np

TAGS = ("init", "poisson", "noise", "bootstrap", "synth", "shuffle", "pretrain")


def derive_seed(seed: int, tag: str, counter: int = 0) -> int:
    key = f"{int(seed)}\x1f{tag}\x1f{int(counter)}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def substream(seed: int, tag: str, counter: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(seed, tag, counter)))
