"""Hierarchical seed derivation.

Every random stream in an experiment is derived from one master seed and
a tag path (purpose strings and indices). Derivation is the master seed
XORed with a stable 64-bit hash of the tag path, so adding clients,
rounds, or phases never perturbs the streams of existing ones.
"""

import hashlib

_MASK = (1 << 64) - 1


def derive_seed(seed: int, *tags) -> int:
    """Derive a child seed from ``seed`` and a tag path.

    Deterministic across processes and platforms (no reliance on
    ``hash()``). Distinct tag paths give independent streams.
    """
    label = "/".join(str(t) for t in tags)
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return (int(seed) ^ int.from_bytes(digest, "little")) & _MASK
