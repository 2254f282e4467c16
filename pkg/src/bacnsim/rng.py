"""Named random substreams derived from one master seed.

Each consumer (channel draws, eavesdropper draws, arrivals, tie-breaks,
learner initialisation...) gets its own generator so that swapping the
policy never perturbs the channel realisations.
"""
import zlib

import numpy as np


def substream(seed, name, *extra):
    key = (zlib.crc32(name.encode()),) + tuple(int(e) for e in extra)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))
