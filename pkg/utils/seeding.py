"""
Seeding utilities for reproducible Monte-Carlo runs.
Every simulated path owns a random substream derived from (seed, path index),
so results do not depend on chunking or worker count.
"""

import os
from typing import Optional

import numpy as np


def set_random_seed(seed: int = 42) -> None:
    """
    Seed NumPy's legacy global generator and record the hash seed.

    Engine code never draws from the global generator; this only pins
    third-party code that does.

    Parameters:
    -----------
    seed : int, default=42
        Random seed value
    """
    np.random.seed(seed)
    os.environ['PYTHONHASHSEED'] = str(seed)


def check_seed(seed: Optional[int]) -> int:
    """Validate a run seed; wall-clock seeding is not allowed."""
    if seed is None:
        raise ValueError("a seed is required")
    if isinstance(seed, bool) or int(seed) != seed or seed < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed!r}")
    return int(seed)


def path_seed_sequence(seed: int, path: int) -> np.random.SeedSequence:
    """SeedSequence for one path; independent of how paths are chunked."""
    return np.random.SeedSequence(entropy=seed, spawn_key=(int(path),))


def path_generator(seed: int, path: int) -> np.random.Generator:
    """
    Random generator owning the substream of one simulated path.

    Parameters:
    -----------
    seed : int
        Run seed
    path : int
        Path index, 0-based

    Returns:
    --------
    numpy.random.Generator
        PCG64 generator seeded from (seed, path)
    """
    return np.random.Generator(np.random.PCG64(path_seed_sequence(seed, path)))


class SeedManager:
    """
    Holds the run seed and pins the legacy global generator to it, so that
    third-party code drawing from it repeats across reruns.
    """

    _instance = None

    def __new__(cls):
        """Singleton pattern for SeedManager."""
        if cls._instance is None:
            cls._instance = super(SeedManager, cls).__new__(cls)
            cls._instance._seed = None
        return cls._instance

    def set_seed(self, seed: int) -> None:
        """
        Set the run seed.

        Parameters:
        -----------
        seed : int
            Run seed, validated by check_seed
        """
        self._seed = check_seed(seed)
        set_random_seed(self._seed)

    def get_seed(self) -> Optional[int]:
        """Current run seed, None before the first set_seed."""
        return self._seed


def get_reproducible_config() -> dict:
    """
    Get current reproducibility configuration.

    Returns:
    --------
    dict
        Seed, generator and library details recorded with each report
    """
    return {
        'seed': SeedManager().get_seed(),
        'bit_generator': 'PCG64',
        'substreams': 'per-path SeedSequence spawn key',
        'numpy_version': np.__version__,
        'python_hashseed': os.environ.get('PYTHONHASHSEED', 'not set'),
    }
