"""Seeded random generators for states, unitaries, POVMs and certified-free
objects.  Everything takes an explicit ``numpy.random.Generator`` so runs
are reproducible from a single seed.
"""

from __future__ import annotations

import numpy as np

from .tensors import hermitize


def haar_unitary(rng: np.random.Generator, d: int) -> np.ndarray:
    """Haar-random unitary via QR of a Ginibre matrix with phase fix."""
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    q, r = np.linalg.qr(g)
    ph = np.diag(r).copy()
    ph /= np.abs(ph)
    return q * ph


def rand_pure_vec(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def ginibre_state(rng: np.random.Generator, d: int, rank: int | None = None) -> np.ndarray:
    """Random density matrix from a normalized Ginibre product."""
    r = rank or d
    g = rng.standard_normal((d, r)) + 1j * rng.standard_normal((d, r))
    rho = g @ g.conj().T
    return hermitize(rho / np.trace(rho).real)


def rand_schmidt_rank_vec(rng: np.random.Generator, da: int, db: int, k: int) -> np.ndarray:
    """Random pure state on da x db with Schmidt rank exactly <= k."""
    k = min(k, da, db)
    left = haar_unitary(rng, da)[:, :k]
    right = haar_unitary(rng, db)[:, :k]
    c = rng.standard_normal(k) + 1j * rng.standard_normal(k)
    c /= np.linalg.norm(c)
    m = left @ np.diag(c) @ right.T
    return m.reshape(-1)


def free_state_with_ensemble(
    rng: np.random.Generator, da: int, db: int, k: int, terms: int | None = None
):
    """Random Schmidt-number <= k state built as an explicit mixture.

    Returns (rho, weights, vectors); the mixture is the certificate.
    """
    m = terms or 2 * da * db
    w = rng.dirichlet(np.ones(m))
    vecs = [rand_schmidt_rank_vec(rng, da, db, k) for _ in range(m)]
    rho = sum(wi * np.outer(v, v.conj()) for wi, v in zip(w, vecs))
    return hermitize(rho), w, vecs


def rand_povm(rng: np.random.Generator, d: int, outcomes: int) -> list[np.ndarray]:
    """Random POVM from normalized Ginibre effects: M_i = S^{-1/2} G_i S^{-1/2}."""
    gs = []
    for _ in range(outcomes):
        g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        gs.append(g @ g.conj().T)
    s = sum(gs)
    vals, vecs = np.linalg.eigh(s)
    isq = vecs @ np.diag(1.0 / np.sqrt(vals)) @ vecs.conj().T
    return [hermitize(isq @ g @ isq) for g in gs]


def rand_projective_povm(rng: np.random.Generator, d: int) -> list[np.ndarray]:
    u = haar_unitary(rng, d)
    return [np.outer(u[:, i], u[:, i].conj()) for i in range(d)]


def isotropic_state(d: int, visibility: float) -> np.ndarray:
    """p * |Omega><Omega| + (1-p) * I/d^2; separable iff p <= 1/(d+1)."""
    from .tensors import max_entangled_projector

    return hermitize(
        visibility * max_entangled_projector(d)
        + (1.0 - visibility) * np.eye(d * d) / (d * d)
    )


def rand_product_povm_pair(rng: np.random.Generator, da: int, db: int, na: int, nb: int):
    return rand_povm(rng, da, na), rand_povm(rng, db, nb)
