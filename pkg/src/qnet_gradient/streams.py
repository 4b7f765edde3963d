"""RandomStream - label-indexed uniforms for common random numbers.

Every uniform consumed by a replication is addressed by a label: the replication index, the
node, the purpose (service or routing) and the per-node index k. The same (seed, label)
always yields the same uniform, whatever else the run consumes, so theta-perturbed runs
stay aligned after their routes diverge.

Each (replication, node, purpose) triple owns an independent Philox counter-based
generator keyed through a numpy SeedSequence; uniform k is the kth output of that
generator. Outputs are drawn in blocks and cached, which leaves the values unchanged.
"""

from enum import Enum

import numpy as np

_BLOCK = 16


class Purpose(Enum):
    """What a uniform is used for."""

    SERVICE = 0
    ROUTING = 1


class RandomStream(object):
    """Uniforms on [0, 1) for one replication, addressed by (node, purpose, k)."""

    def __init__(self, seed, replication=0):
        """Initialise the stream.

        :param seed: nonnegative 64-bit integer seed shared by all replications of a run
        :param replication: replication index, part of every label
        """
        if seed < 0 or replication < 0:
            raise ValueError("Seed and replication index must be nonnegative")
        self.seed = int(seed)
        self.replication = int(replication)
        self._generators = {}
        self._blocks = {}

    def _generator(self, node, purpose):
        key = (node, purpose)
        if key not in self._generators:
            sequence = np.random.SeedSequence(
                entropy=self.seed, spawn_key=(self.replication, node, purpose.value))
            self._generators[key] = np.random.Generator(np.random.Philox(sequence))
            self._blocks[key] = np.empty(0)
        return self._generators[key]

    def uniforms(self, node, purpose, count):
        """Return the first count uniforms for (node, purpose) as an array.

        :param node: node index, 1-based
        :param purpose: Purpose member
        :param count: number of uniforms, i.e. labels k = 1..count
        """
        generator = self._generator(node, purpose)
        key = (node, purpose)
        block = self._blocks[key]
        if block.size < count:
            extra = max(count - block.size, _BLOCK)
            block = np.concatenate((block, generator.random(extra)))
            self._blocks[key] = block
        return block[:count]

    def uniform(self, node, purpose, k):
        """Return the uniform with label (node, purpose, k), k >= 1."""
        if k < 1:
            raise ValueError("Uniform index k must be at least 1, got {}".format(k))
        return float(self.uniforms(node, purpose, k)[k - 1])
