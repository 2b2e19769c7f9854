"""Deterministic hierarchical random-stream derivation.

All randomness in the package flows from a single root seed.  Every
consumer derives its own independent substream through a fixed integer
path (root -> run -> step -> trial), so results never depend on
execution order or on how work is scheduled across threads.

Path layout used by the experiment harness:

    (run,)                      per-run stream (initial draws)
    (run, step, LEARN, trial)   exploration trials inside one step
    (run, step, EVAL, trial)    evaluation trials of the stepped policy
    (run, step, RETRY, trial)   one-shot resample after estimator failure
    (PRETRAIN, i)               dynamics pretraining rollouts

The tags keep sibling domains from colliding without any global
counter.
"""

from __future__ import annotations

import numpy as np

# Domain tags for the derivation path.  Values are arbitrary but frozen:
# changing them changes every downstream draw.
LEARN = 0
EVAL = 1
RETRY = 2
PRETRAIN = 3
ENCODE = 4


def substream(root_seed: int, *path: int) -> np.random.Generator:
    """Return the generator at `path` under `root_seed`.

    The same (root_seed, path) pair always yields an identical stream;
    distinct paths yield statistically independent streams.
    """
    if root_seed < 0:
        raise ValueError("root seed must be non-negative")
    ss = np.random.SeedSequence(root_seed, spawn_key=tuple(int(p) for p in path))
    return np.random.default_rng(ss)


def children(rng: np.random.Generator, count: int) -> list[np.random.Generator]:
    """Derive `count` independent child generators from `rng`.

    Children are taken from the generator's seed sequence, so the i-th
    child of a given stream is always the same generator regardless of
    scheduling.  Successive calls continue the spawn sequence rather
    than repeating it.
    """
    seq = rng.bit_generator.seed_seq
    return [np.random.default_rng(ss) for ss in seq.spawn(count)]


def psd_sqrt(cov: np.ndarray) -> np.ndarray:
    """Symmetric square root of a positive semidefinite matrix.

    Accepts singular (even zero) covariances; raises for matrices with
    a meaningfully negative eigenvalue.  ``mean + psd_sqrt(cov) @ z``
    with standard-normal ``z`` draws from ``N(mean, cov)``.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError("covariance must be a square matrix")
    scale = float(np.max(np.abs(cov))) if cov.size else 0.0
    if cov.size and float(np.max(np.abs(cov - cov.T))) > 1e-9 * max(1.0, scale):
        raise ValueError("covariance must be symmetric")
    if cov.shape[0] == 0:
        return cov.copy()
    eigvals, eigvecs = np.linalg.eigh((cov + cov.T) / 2.0)
    if eigvals[0] < -1e-10 * max(1.0, scale):
        raise ValueError("covariance must be positive semidefinite")
    root = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))
    return root @ eigvecs.T
