import numpy as np

# Stream tags keep the Monte Carlo purposes on disjoint seed trees.
STREAM_ARL = 0
STREAM_DELAY = 1
STREAM_CALIBRATION = 2
STREAM_MATRIX = 3
STREAM_FIDUCIAL = 4


def trial_rng(master_seed: int, *key: int) -> np.random.Generator:
    """
    Generator reproducible from (master_seed, key...).

    Uses SeedSequence spawn keys, so streams for distinct keys never overlap
    and a trial can be replayed in isolation from its index alone.
    """
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(seq))

