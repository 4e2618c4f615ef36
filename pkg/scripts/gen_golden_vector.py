#!/usr/bin/env python3
"""Standalone generator for the golden hashing-embedder vector fixture.

Implements the feature-hashing rule directly, without importing the package,
so the frozen fixture is an independent oracle: lowercase, tokenize on
non-alphanumeric runs, emit each token plus the character trigrams of the
'#'-padded token, hash with FNV-1a 64-bit, bucket by hash mod d, sign from
bit 63, L2-normalize.

Usage: python scripts/gen_golden_vector.py [text] [dimension] > fixture.json
"""
import json
import math
import sys

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & MASK64
    return h


def tokenize(text: str) -> list[str]:
    tokens = []
    current = []
    for ch in text.lower():
        if ch.isalnum():
            current.append(ch)
        elif current:
            tokens.append("".join(current))
            current = []
    if current:
        tokens.append("".join(current))
    return tokens


def features(token: str) -> list[str]:
    padded = "#" + token + "#"
    return [token] + [padded[i : i + 3] for i in range(len(padded) - 2)]


def embed(text: str, dimension: int) -> list[float]:
    buckets = [0] * dimension
    for token in tokenize(text):
        for feature in features(token):
            h = fnv1a_64(feature.encode("utf-8"))
            sign = 1 if (h >> 63) & 1 == 0 else -1
            buckets[h % dimension] += sign
    norm = math.sqrt(sum(b * b for b in buckets))
    if norm == 0:
        return [0.0] * dimension
    return [b / norm for b in buckets]


def main() -> None:
    text = sys.argv[1] if len(sys.argv) > 1 else "thyroid"
    dimension = int(sys.argv[2]) if len(sys.argv) > 2 else 256
    json.dump({"text": text, "dimension": dimension, "values": embed(text, dimension)}, sys.stdout)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
