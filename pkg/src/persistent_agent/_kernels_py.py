"""Pure-Python twin of the compiled memory kernels (same results, bit-for-bit)."""

from __future__ import annotations

import math
import re

import numpy as np

FNV_OFFSET = 14695981039346656037
FNV_PRIME = 1099511628211
_MASK = (1 << 64) - 1
_TOKEN = re.compile(rb"[A-Za-z0-9]+")


def _fnv1a(token: bytes) -> int:
    h = FNV_OFFSET
    for c in token:
        h = ((h ^ c) * FNV_PRIME) & _MASK
    return h


def embed_bytes(data: bytes, dim: int) -> np.ndarray:
    counts = [0.0] * dim
    for tok in _TOKEN.findall(data):
        counts[_fnv1a(tok.lower()) % dim] += 1.0
    norm = 0.0
    for v in counts:
        norm += v * v
    if norm > 0.0:
        norm = math.sqrt(norm)
        counts = [v / norm for v in counts]
    return np.array(counts, dtype=np.float64)


def cosine_scores(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    nz = [j for j in range(query.shape[0]) if query[j] != 0.0]
    qv = [float(query[j]) for j in nz]
    out = np.zeros(matrix.shape[0], dtype=np.float64)
    if not nz:
        return out
    for r, row in enumerate(matrix[:, nz].tolist()):
        s = 0.0
        for a, b in zip(row, qv):
            s += a * b
        out[r] = s
    return out


def top_k(scores: np.ndarray, ids: np.ndarray, k: int) -> list:
    order = sorted(range(len(scores)), key=lambda i: (-float(scores[i]), int(ids[i])))
    return order[:k]
