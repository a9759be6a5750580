"""Keyword topic memory: per-keyword key/content vectors, addressing, read.

Each keyword contributes an addressing key (last forward state and first
backward state of a dedicated Bi-GRU over its characters, concatenated)
and a content vector (the mean of its character embeddings).  Addressing
softmaxes the dot products between the decoder state and the keys; the
read is the resulting convex combination of content vectors, added onto
the state to make it topic-aware.
"""

import numpy as np

from . import numerics as nm
from .errors import DimensionError, DomainError
from .layers import gru_run
from .numerics import Tensor


class MemoryBank:
    """Per-sample keyword memories: paired key and content vectors."""

    def __init__(self, input_memory, output_memory):
        if len(input_memory) != len(output_memory):
            raise DimensionError("memory bank: %d keys vs %d contents"
                                 % (len(input_memory), len(output_memory)))
        self.input_memory = list(input_memory)
        self.output_memory = list(output_memory)

    @property
    def size(self):
        return len(self.input_memory)

    @classmethod
    def empty(cls):
        return cls([], [])

    def zeroed(self):
        """Same-size bank with every memory vector forced to zero."""
        return MemoryBank(
            [Tensor(np.zeros(q.shape)) for q in self.input_memory],
            [Tensor(np.zeros(m.shape)) for m in self.output_memory])


def encode_keywords(embedding, cell_fw, cell_bw, keywords):
    """Build a MemoryBank from keyword character-id sequences.

    Keys come from a keyword Bi-GRU (its own parameters, half the state
    width per direction); contents are mean character embeddings.
    """
    keys, contents = [], []
    for keyword in keywords:
        chars = list(keyword)
        if not chars:
            raise DomainError("keyword with zero characters")
        embs = [embedding.lookup(c) for c in chars]
        fw_last = gru_run(cell_fw, embs)[-1]
        bw_first = gru_run(cell_bw, list(reversed(embs)))[-1]
        keys.append(nm.concat([fw_last, bw_first]))
        total = embs[0]
        for e in embs[1:]:
            total = nm.add(total, e)
        contents.append(nm.scale(total, 1.0 / len(chars)))
    return MemoryBank(keys, contents)


def address(bank, state):
    """Keyword importance distribution: softmax of state-key dot products."""
    if bank.size == 0:
        raise DomainError("address on an empty memory bank")
    return nm.softmax(nm.matmul(nm.stack(bank.input_memory), state))


def read(bank, weights):
    """Weighted sum of the content vectors."""
    if weights.shape != (bank.size,):
        raise DimensionError("read: %d weights for a bank of %d"
                             % (weights.size, bank.size))
    return nm.matmul(weights, nm.stack(bank.output_memory))


def fuse(topic, state):
    """Topic-aware state: elementwise sum of read vector and state."""
    return nm.add(topic, state)
