"""Dense spectral decomposition of the Laplacian ``L = I − P`` in ``L²(Γ, μ)``.

``P`` is self-adjoint in ``L²(μ)``, so ``D^{1/2} P D^{-1/2}`` (``D = diag μ``)
is a symmetric matrix.  Its eigenvectors ``u_i`` give ``L²(μ)``-orthonormal
eigenvectors ``v_i = u_i / √μ`` of ``L``.
"""

from __future__ import annotations

import numpy as np

from .markov import MarkovOperator

__all__ = ["SpectralDecomposition", "spectral_decomposition", "MAX_DENSE_VERTICES"]

#: size cap for dense eigendecompositions
MAX_DENSE_VERTICES = 2048
#: eigenvalues of ``L`` below this are rounding noise around 0
ZERO_EIGENVALUE_TOL = 1e-12


class SpectralDecomposition:
    """Eigenpairs of ``L`` on a finite graph.

    Attributes
    ----------
    eigenvalues : ndarray
        Ascending eigenvalues ``λ_i`` of ``L`` (clipped into ``[0, 2]``;
        values below ``ZERO_EIGENVALUE_TOL`` are set to exactly 0).
    eigenvectors : ndarray, shape (n, n)
        Column ``i`` is ``v_i``; ``Σ_x v_i(x) v_j(x) μ(x) = δ_ij``.
    """

    def __init__(self, op: MarkovOperator):
        g = op.graph
        n = g.n_vertices
        if n > MAX_DENSE_VERTICES:
            raise ValueError(f"dense eigendecomposition is limited to {MAX_DENSE_VERTICES} vertices")
        s = np.sqrt(g.mu)
        S = g.nu.toarray() / np.outer(s, s)
        theta, U = np.linalg.eigh(S)
        lam = np.clip(1.0 - theta, 0.0, 2.0)
        # constants (and exact kernels) come out as O(1e-16); make them exact
        lam[lam < ZERO_EIGENVALUE_TOL] = 0.0
        order = np.argsort(lam, kind="stable")
        self.operator = op
        self.mu = g.mu
        self.eigenvalues = lam[order]
        self.eigenvectors = U[:, order] / s[:, None]
        self.eigenvalues.setflags(write=False)
        self.eigenvectors.setflags(write=False)

    @property
    def spectral_gap(self) -> float:
        """Smallest eigenvalue of ``L`` on functions orthogonal to constants."""
        return float(self.eigenvalues[1]) if self.eigenvalues.size > 1 else 0.0

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])

    def coefficients(self, f: np.ndarray) -> np.ndarray:
        """``c_i = ⟨f, v_i⟩_μ`` (column-wise for 2-D ``f``)."""
        f = np.asarray(f)
        w = f * self.mu if f.ndim == 1 else f * self.mu[:, None]
        return self.eigenvectors.T @ w

    def synthesize(self, c: np.ndarray) -> np.ndarray:
        return self.eigenvectors @ c

    def apply(self, values: np.ndarray, f: np.ndarray) -> np.ndarray:
        """``Σ_i values_i ⟨f, v_i⟩ v_i``; ``values`` are multiplier samples at ``λ_i``."""
        c = self.coefficients(f)
        values = np.asarray(values)
        c = values * c if c.ndim == 1 else values[:, None] * c
        return self.synthesize(c)

    def apply_function(self, F, f: np.ndarray) -> np.ndarray:
        return self.apply(np.asarray(F(self.eigenvalues)), f)


def spectral_decomposition(op: MarkovOperator) -> SpectralDecomposition:
    """Cached :class:`SpectralDecomposition` of ``op`` (computed once per operator)."""
    cached = getattr(op, "_spectral", None)
    if cached is None:
        cached = SpectralDecomposition(op)
        op._spectral = cached
    return cached
