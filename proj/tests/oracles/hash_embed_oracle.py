#!/usr/bin/env python3
"""Independent reference for the baseline feature-hashing embedder.

Features: lowercase ASCII, split on characters that are not ASCII
alphanumerics (non-ASCII code points stay inside tokens), emit "w:<token>"
for each token and "g:<trigram>" for each code-point trigram of tokens with
at least three code points. Each feature is hashed with 64-bit FNV-1a over
its UTF-8 bytes; index = h % dims, sign = -1 when bit 63 is set.
"""
import json
import math
import sys

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def tokens(text: str):
    out, cur = [], []
    for ch in text:
        if ch.isascii():
            if ch.isalnum():
                cur.append(ch.lower())
                continue
            if cur:
                out.append("".join(cur))
                cur = []
        else:
            cur.append(ch)
    if cur:
        out.append("".join(cur))
    return out


def features(text: str):
    feats = []
    for t in tokens(text):
        feats.append("w:" + t)
        for i in range(len(t) - 2):
            feats.append("g:" + t[i:i + 3])
    return feats


def embed(text: str, dims: int):
    counts = [0] * dims
    for f in features(text):
        h = fnv1a64(f.encode("utf-8"))
        counts[h % dims] += -1 if (h >> 63) & 1 else 1
    norm = math.sqrt(sum(c * c for c in counts))
    if norm == 0:
        return [0.0] * dims
    return [c / norm for c in counts]


def cosine(u, v):
    dot = sum(a * b for a, b in zip(u, v))
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    if nu == 0 or nv == 0:
        return 0.0
    return dot / (nu * nv)


if __name__ == "__main__":
    if len(sys.argv) == 3:
        print(json.dumps(embed(sys.argv[1], int(sys.argv[2]))))
    else:
        a = embed("movie title", 512)
        b = embed("film name", 512)
        c = embed("postal code", 512)
        print("cos(movie title, film name) =", repr(cosine(a, b)))
        print("cos(movie title, postal code) =", repr(cosine(a, c)))
        print("features(id) =", features("id"))
