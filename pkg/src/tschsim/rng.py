"""Named pseudo-random substreams derived from one run seed."""

from __future__ import annotations

import random


class Streams:
    """One independent :class:`random.Random` per purpose tag.

    A stream is seeded from ``"<seed>/<tag>"`` so adding or removing draws in one
    consumer leaves every other stream untouched.
    """

    def __init__(self, seed: int) -> None:
        self.seed = seed
        self._streams: dict[str, random.Random] = {}

    def get(self, tag: str) -> random.Random:
        r = self._streams.get(tag)
        if r is None:
            r = self._streams[tag] = random.Random(f"{self.seed}/{tag}")
        return r

    def next_random(self, tag: str) -> float:
        return self.get(tag).random()
