"""Named deterministic random substreams derived from one session seed.

Every source of randomness in a run (mask sampling, crossover selectors,
mutation draws, parent choice, dropout, embeddings, dataset generation)
pulls from its own named stream, so steering actions never perturb draws
they are not responsible for.  Stream positions serialize exactly, which
is what makes mid-run save/load reproduce the uninterrupted run.
"""
from __future__ import annotations

import hashlib
from typing import Iterable

import numpy as np


def _name_key(name: str) -> int:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


def as_generator(seed_or_rng: int | np.random.Generator) -> np.random.Generator:
    """Accept either an integer seed or an existing Generator."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(int(seed_or_rng))


class RngHub:
    """Factory and registry for named substreams of a single session seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, np.random.Generator] = {}

    def stream(self, name: str) -> np.random.Generator:
        gen = self._streams.get(name)
        if gen is None:
            seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(_name_key(name),))
            gen = np.random.Generator(np.random.PCG64(seq))
            self._streams[name] = gen
        return gen

    def state(self) -> dict:
        """JSON-safe snapshot of the seed and every materialized stream."""
        return {
            "seed": self.seed,
            "streams": {name: gen.bit_generator.state for name, gen in sorted(self._streams.items())},
        }

    @classmethod
    def from_state(cls, state: dict) -> "RngHub":
        hub = cls(state["seed"])
        for name, bg_state in state["streams"].items():
            gen = hub.stream(name)
            gen.bit_generator.state = bg_state
        return hub

    def digest(self, names: Iterable[str] | None = None) -> str:
        """Stable hex digest of the current stream positions."""
        import json

        state = self.state()
        if names is not None:
            wanted = set(names)
            state["streams"] = {k: v for k, v in state["streams"].items() if k in wanted}
        blob = json.dumps(state, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()
