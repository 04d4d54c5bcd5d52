"""Reference implementation of the hash backend's per-token log-probabilities.

Written from the backend's description only, for freezing golden values into
tests/unit/test_scoring.cpp:

    python3 tests/oracles/hash_oracle.py
"""

import math
import struct

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK = (1 << 64) - 1


def fnv1a(h, data):
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & MASK
    return h


def mix64(z):
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & MASK
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & MASK
    z ^= z >> 31
    return z


def hash_logprobs(text, model_id, seed):
    h = fnv1a(FNV_OFFSET, struct.pack("<q", seed))
    h = fnv1a(h, model_id.encode("utf-8"))
    h = fnv1a(h, b"\x00")
    out = []
    for tok in text.split():
        h = fnv1a(h, tok.encode("utf-8"))
        h = fnv1a(h, b"\x1f")
        u = (mix64(h) >> 11) * 2.0**-53
        out.append(-(1.0 + 4.0 * u))
    return out


def ppl(logprobs):
    return math.exp(-math.fsum(logprobs) / len(logprobs))


CASES = [
    ("catholics are lazy", "toy", 42),
    ("women", "toy", 42),
    ("korean people have no manners", "gpt2", 7),
    ("deaf people", "gpt2", -1),
]

if __name__ == "__main__":
    for text, model, seed in CASES:
        lps = hash_logprobs(text, model, seed)
        print(f'{{"{text}", "{model}", {seed}, {{{", ".join(repr(x) for x in lps)}}}, {ppl(lps)!r}}},')
