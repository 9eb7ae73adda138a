"""Top-magnitude eigenpairs of the adjacency matrix.

Two routes are provided on purpose: a Krylov solver (Lanczos with full
reorthogonalisation) for the m largest-magnitude eigenpairs, and a dense
symmetric eigendecomposition that serves as the independent oracle for
verifying it. Both share one ordering and sign convention so results are
reproducible across runs and solvers.

Conventions:
  * eigenvalues are ordered by descending magnitude;
  * magnitude ties (within 1e-9 relative) put the positive eigenvalue first,
    then order degenerate pairs by the first index of the eigenvector's
    maximal-magnitude entry;
  * each eigenvector's first maximal-magnitude entry is made positive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph

MAGNITUDE_TIE_RTOL = 1e-9
DEFAULT_ORACLE_CAP = 512


class ConvergenceError(RuntimeError):
    """Krylov solver failed to reach the requested residual tolerance."""

    def __init__(self, message: str, residuals: np.ndarray):
        super().__init__(message)
        self.residuals = residuals


@dataclass(frozen=True)
class SpectralTruncation:
    """The m largest-magnitude eigenvalues and orthonormal eigenvectors."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        self.eigenvalues.setflags(write=False)
        self.eigenvectors.setflags(write=False)
        if self.eigenvectors.ndim != 2 or len(self.eigenvalues) != self.eigenvectors.shape[1]:
            raise ValueError("need one eigenvector column per eigenvalue")

    @property
    def m(self) -> int:
        return len(self.eigenvalues)

    @property
    def n(self) -> int:
        return self.eigenvectors.shape[0]

    def principal(self) -> np.ndarray:
        return self.eigenvectors[:, 0]


def matvec(graph: Graph, x: np.ndarray) -> np.ndarray:
    """Adjacency product: y[i] = sum of x over the neighbours of i."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (graph.n,):
        raise ValueError(f"vector has length {x.shape}, graph has {graph.n} nodes")
    return graph.to_scipy() @ x


def _magnitudes_tied(a: float, b: float) -> bool:
    return abs(abs(a) - abs(b)) <= MAGNITUDE_TIE_RTOL * max(1.0, abs(a), abs(b))


def _canonical_signs(vectors: np.ndarray) -> np.ndarray:
    out = vectors.copy()
    for c in range(out.shape[1]):
        lead = int(np.argmax(np.abs(out[:, c])))
        if out[lead, c] < 0:
            out[:, c] = -out[:, c]
    return out


def _magnitude_order(values: np.ndarray, vectors: np.ndarray) -> list[int]:
    idx = sorted(range(len(values)), key=lambda i: -abs(values[i]))
    groups: list[list[int]] = []
    for i in idx:
        if groups and _magnitudes_tied(values[groups[-1][-1]], values[i]):
            groups[-1].append(i)
        else:
            groups.append([i])
    order: list[int] = []
    for group in groups:
        group.sort(key=lambda i: (
            0 if values[i] > 0 else 1,
            int(np.argmax(np.abs(vectors[:, i]))),
            i,
        ))
        order.extend(group)
    return order


def _ordered_truncation(values: np.ndarray, vectors: np.ndarray) -> SpectralTruncation:
    vectors = _canonical_signs(vectors)
    order = _magnitude_order(values, vectors)
    return SpectralTruncation(
        eigenvalues=values[order].copy(),
        eigenvectors=vectors[:, order].copy(),
    )


def dense_eigendecomposition(graph: Graph, oracle_cap: int = DEFAULT_ORACLE_CAP) -> SpectralTruncation:
    """Full spectrum via a classical dense symmetric solver (the oracle route)."""
    if graph.n > oracle_cap:
        raise ValueError(f"dense oracle capped at n={oracle_cap}, got {graph.n}")
    values, vectors = np.linalg.eigh(graph.to_dense())
    return _ordered_truncation(values, vectors)


def _fresh_direction(basis: np.ndarray, rng: np.random.Generator) -> np.ndarray | None:
    """Random unit vector orthogonal to the current basis, or None if spanned."""
    n = basis.shape[0]
    for _ in range(5):
        w = rng.standard_normal(n)
        w -= basis @ (basis.T @ w)
        w -= basis @ (basis.T @ w)
        norm = np.linalg.norm(w)
        if norm > 1e-8:
            return w / norm
    return None


def _lanczos_factorization(A, v0, dim, rng, steps, max_steps, breakdown_tol):
    """Build up to ``dim`` Lanczos vectors with full reorthogonalisation.

    On breakdown (invariant subspace reached) a fresh random orthogonal
    direction is injected and the corresponding off-diagonal coupling is set
    to zero, which keeps the projected matrix block-tridiagonal and lets the
    factorisation cover degenerate eigenspaces and disconnected graphs.
    """
    n = A.shape[0]
    V = np.zeros((n, dim))
    alphas = np.zeros(dim)
    betas = np.zeros(max(dim - 1, 0))
    v = v0 / np.linalg.norm(v0)
    j = 0
    while j < dim and steps < max_steps:
        V[:, j] = v
        w = A @ v
        steps += 1
        alphas[j] = float(v @ w)
        basis = V[:, :j + 1]
        w -= basis @ (basis.T @ w)
        w -= basis @ (basis.T @ w)
        if j + 1 == dim:
            j += 1
            break
        norm = np.linalg.norm(w)
        if norm > breakdown_tol:
            betas[j] = norm
            v = w / norm
        else:
            betas[j] = 0.0
            nxt = _fresh_direction(basis, rng)
            if nxt is None:
                j += 1
                break
            v = nxt
        j += 1
    return V[:, :j], alphas[:j], betas[:max(j - 1, 0)], steps


def top_m_eigenpairs(
    graph: Graph,
    m: int,
    tol: float = 1e-10,
    max_iter: int = 1000,
    seed: int = 0,
) -> SpectralTruncation:
    """Lanczos solve for the m largest-magnitude adjacency eigenpairs.

    The start vector is the normalised all-ones vector (deterministic); seeded
    noise only enters through breakdown injections and restarts. When the
    Krylov dimension min(n, 4m+20) does not reach ``tol`` on every retained
    pair the factorisation restarts with doubled dimension (up to n, at which
    point the projection is exact). Raises ConvergenceError carrying the
    achieved residuals if the ``max_iter`` matvec budget runs out first.
    """
    n = graph.n
    if n < 1:
        raise ValueError("graph is empty")
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")
    A = graph.to_scipy()
    rng = np.random.default_rng(seed)
    max_degree = float(graph.degrees().max()) if n else 0.0
    breakdown_tol = 1e-12 * max(1.0, max_degree)

    dim = min(n, 4 * m + 20)
    v0 = np.ones(n)
    steps = 0
    residuals = np.full(m, np.inf)
    while True:
        V, alphas, betas, steps = _lanczos_factorization(
            A, v0, dim, rng, steps, max_iter, breakdown_tol)
        used = V.shape[1]
        T = np.diag(alphas)
        if used > 1:
            T += np.diag(betas, 1) + np.diag(betas, -1)
        theta, S = np.linalg.eigh(T)
        ritz = V @ S
        order = _magnitude_order(theta, ritz)[:m]
        values = theta[order]
        vectors = ritz[:, order]
        residuals = np.array([
            np.linalg.norm(A @ vectors[:, i] - values[i] * vectors[:, i])
            for i in range(len(order))
        ])
        if len(order) >= m and residuals.max() <= tol:
            return _ordered_truncation(values, vectors)
        exhausted = steps >= max_iter
        if exhausted or dim >= n:
            raise ConvergenceError(
                f"top-{m} eigensolve stalled at max residual {residuals.max():.3e} "
                f"(tol {tol:.1e}, {steps} matvecs)",
                residuals=residuals,
            )
        dim = min(n, 2 * dim)
        combined = vectors.sum(axis=1)
        norm = np.linalg.norm(combined)
        v0 = combined / norm if norm > 1e-12 else np.ones(n)
        v0 = v0 + 1e-8 * rng.standard_normal(n)


def spectral_gap(trunc: SpectralTruncation) -> float:
    """|second| / |dominant| eigenvalue magnitude ratio, in [0, 1]."""
    if trunc.m < 2:
        raise ValueError("spectral gap needs at least two eigenvalues")
    lead = abs(float(trunc.eigenvalues[0]))
    if lead == 0.0:
        raise ValueError("dominant eigenvalue is zero")
    return abs(float(trunc.eigenvalues[1])) / lead


def subspace_residual(
    vector: np.ndarray,
    value: float,
    oracle: SpectralTruncation,
    cluster_tol: float = 1e-6,
) -> float:
    """Distance from ``vector`` to the oracle eigenspace matching ``value``.

    The eigenspace is the span of all oracle eigenvectors whose eigenvalue
    lies within ``cluster_tol`` (relative) of ``value``; comparing against the
    span rather than a single column makes the check meaningful for
    degenerate eigenvalues.
    """
    sel = np.abs(oracle.eigenvalues - value) <= cluster_tol * max(1.0, abs(value))
    if not sel.any():
        return float(np.linalg.norm(vector))
    basis = oracle.eigenvectors[:, sel]
    return float(np.linalg.norm(vector - basis @ (basis.T @ vector)))


def rayleigh_quotient(graph: Graph, vector: np.ndarray) -> float:
    denom = float(vector @ vector)
    if denom == 0.0:
        raise ValueError("zero vector has no Rayleigh quotient")
    return float(vector @ matvec(graph, vector)) / denom
