"""Seeded construction of structured kinetic samples for audits and tests.

A sample is macroscopic (smooth spatial profiles times the orthonormalized
collision-invariant modes), microscopic (Maxwellian-enveloped noise projected
off the invariants), or a mix.  Profiles are low-frequency Fourier modes with
k >= 1, so every sample has exactly zero total mass on the symmetric domain.
"""
from __future__ import annotations

import numpy as np

from .collision import LinearizedOperator, project_Pi

__all__ = ["smooth_profile", "macroscopic_sample", "microscopic_sample", "structured_samples"]


def smooth_profile(coords: np.ndarray, rng: np.random.Generator, half_width: float,
                   n_modes: int = 3) -> np.ndarray:
    """Random mean-zero combination of the first sine/cosine modes."""
    x = np.asarray(coords, dtype=float) / half_width
    out = np.zeros_like(x)
    for k in range(1, n_modes + 1):
        a, b = rng.normal(size=2)
        out += a * np.cos(np.pi * k * x) + b * np.sin(np.pi * k * x)
    return out / np.sqrt(n_modes)


def macroscopic_sample(op: LinearizedOperator, coords: np.ndarray, rng: np.random.Generator,
                       half_width: float) -> np.ndarray:
    """Random field in the pointwise span of the collision-invariant modes."""
    coeff = np.stack([smooth_profile(coords, rng, half_width) for _ in range(5)], axis=1)
    coeff *= rng.uniform(0.3, 1.0, size=(1, 5))
    return coeff @ op.inv_basis.T


def microscopic_sample(op: LinearizedOperator, ncells: int, rng: np.random.Generator) -> np.ndarray:
    """Maxwellian-enveloped white noise with the invariant components removed."""
    M = op.grid.maxwellian(1.0)
    g = rng.standard_normal((ncells, op.grid.size)) * M[None, :]
    return g - project_Pi(op, g)


def structured_samples(op: LinearizedOperator, coords: np.ndarray, half_width: float,
                       n_samples: int, rng: np.random.Generator,
                       kinds: tuple = ("macro", "micro", "mixed")) -> list:
    """Sample set cycling through the requested kinds."""
    out = []
    ncells = len(coords)
    for k in range(n_samples):
        kind = kinds[k % len(kinds)]
        if kind == "macro":
            g = macroscopic_sample(op, coords, rng, half_width)
        elif kind == "micro":
            g = microscopic_sample(op, ncells, rng)
        else:
            g = macroscopic_sample(op, coords, rng, half_width) \
                + 0.7 * microscopic_sample(op, ncells, rng)
        out.append(g)
    return out
