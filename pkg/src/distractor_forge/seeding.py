"""Keyed random streams: one run seed fans out into independent per-task RNGs."""

from __future__ import annotations

import hashlib
import json
import random


def derive_seed(seed: int, *parts: object) -> int:
    payload = json.dumps([seed, *[str(p) for p in parts]], ensure_ascii=False)
    return int.from_bytes(hashlib.sha256(payload.encode("utf-8")).digest()[:8], "big")


def derive_rng(seed: int, *parts: object) -> random.Random:
    """A ``random.Random`` whose state depends only on ``seed`` and ``parts``.

    Results therefore do not depend on the order in which parallel tasks run.
    """
    return random.Random(derive_seed(seed, *parts))
