"""Counter-based splitmix64 streams and seed hashing."""
import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = 0xFFFFFFFFFFFFFFFF


def splitmix64(seed, count):
    """First ``count`` outputs of splitmix64 started from ``seed``."""
    with np.errstate(over="ignore"):
        z = np.uint64(int(seed) & _MASK) + _GAMMA * np.arange(1, count + 1, dtype=np.uint64)
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def mix_seed(*values) -> int:
    """Hash non-negative integers into one 64-bit seed, order-sensitive."""
    state = 0
    for v in values:
        state = int(splitmix64(state ^ (int(v) & _MASK), 1)[0])
    return state


def uniform01(seed, count):
    """``count`` doubles in [0, 1) with 53 random bits each."""
    return (splitmix64(seed, count) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def sample_rng(seed, epoch, index):
    """Generator for one sample's augmentation draw; independent of batch order."""
    return np.random.default_rng(mix_seed(seed, epoch, index))
