"""Spectral machinery for the iteration.

Symmetric eigendecomposition, eigenvalue band selection, intersection of
spanned subspaces with bilinear-form nullspaces, and the iterative choice
of test directions ``eta`` that are unit-normalized in one quadratic form
while orthogonal to earlier directions in three others.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EtaSelectionError, NumericError, ParameterError, SubspaceError

DEFAULT_RANK_TOL = 1e-8
DEFAULT_ETA_TOL = 1e-8
_MAX_REDRAWS = 50

# Acceptable Euclidean norm window for eta directions.  Wider than the
# idealized (1/2, 2) so that noisy finite-size spectra flag instead of fail.
_ETA_NORM_WINDOW = (0.25, 4.0)


@dataclass(frozen=True)
class SpectralBands:
    """Eigenvalue bands used to pick well-conditioned spectral subspaces.

    The primary bands reflect the idealized spectra (eigenvalues near 1 for
    the set-overlap form, near ``eps_t`` for the cross form).  Finite-size
    spectra routinely leave those bands, so widened fallback bands and a
    nearest-to-center last resort are provided; uses of the fallbacks are
    flagged, never fatal.
    """

    phi_lo: float = 0.9
    phi_hi: float = 1.1
    psi_lo_mult: float = 0.9
    psi_hi_mult: float = 1.1
    target_fraction: float = 0.75
    fallback_phi: tuple = (0.5, 1.5)
    fallback_psi_mult: tuple = (0.3, 3.0)

    def __post_init__(self):
        for lo, hi in (
            (self.phi_lo, self.phi_hi),
            (self.psi_lo_mult, self.psi_hi_mult),
            self.fallback_phi,
            self.fallback_psi_mult,
        ):
            if not (lo < hi):
                raise ParameterError(f"band bounds must satisfy lo < hi, got ({lo}, {hi})")
        if not (0 < self.target_fraction <= 1):
            raise ParameterError(f"target_fraction must be in (0, 1], got {self.target_fraction}")


@dataclass(frozen=True)
class EtaSet:
    """Chosen test directions with their bilinear-form bookkeeping.

    ``etas`` has one direction per row.  ``psi_quad[i]`` records
    ``eta_i Psi eta_i^T`` (the value that scales the signed samples later);
    directions whose norm or psi form leaves its window are flagged, not
    rejected.
    """

    etas: np.ndarray
    gram_phi: np.ndarray
    gram_psi: np.ndarray
    psi_quad: np.ndarray
    flags: tuple = ()

    @property
    def count(self) -> int:
        return self.etas.shape[0]


def sym_eig(s: np.ndarray):
    """Eigendecomposition of a (near-)symmetric matrix.

    Symmetrizes first, returns eigenvalues in descending order with the
    matching orthonormal eigenvector columns, and verifies the
    reconstruction residual.
    """
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ParameterError(f"expected a square matrix, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise NumericError("matrix contains non-finite entries")
    sym = (s + s.T) / 2.0
    vals, vecs = np.linalg.eigh(sym)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    scale = max(1.0, float(np.linalg.norm(sym)))
    resid = float(np.linalg.norm(sym - (vecs * vals) @ vecs.T))
    if resid > 1e-8 * scale:
        raise NumericError("eigendecomposition residual too large", achieved=resid)
    return vals, vecs


def band_select(eigvals: np.ndarray, eigvecs: np.ndarray, lo: float, hi: float, max_count: int):
    """Eigenvectors whose eigenvalues fall in [lo, hi].

    If more than ``max_count`` qualify, the ones with eigenvalues nearest
    the band center are kept.  Returns ``(basis, found)`` where ``found``
    counts the eigenvalues inside the band before truncation; the caller
    decides what to do with an empty basis.
    """
    if not (lo < hi):
        raise ParameterError(f"band bounds must satisfy lo < hi, got ({lo}, {hi})")
    if max_count < 1:
        raise ParameterError(f"max_count must be positive, got {max_count}")
    inside = np.flatnonzero((eigvals >= lo) & (eigvals <= hi))
    found = len(inside)
    if found > max_count:
        center = (lo + hi) / 2.0
        nearest = np.argsort(np.abs(eigvals[inside] - center), kind="stable")[:max_count]
        inside = inside[np.sort(nearest)]
    return eigvecs[:, inside], found


def nearest_center_select(eigvals: np.ndarray, eigvecs: np.ndarray, center: float, count: int):
    """Last-resort span: the ``count`` eigenvectors nearest a target value."""
    order = np.argsort(np.abs(eigvals - center), kind="stable")[: max(1, count)]
    return eigvecs[:, np.sort(order)]


def _projector(basis: np.ndarray, dim: int) -> np.ndarray:
    if basis.size == 0:
        return np.zeros((dim, dim))
    return basis @ basis.T


def constrained_subspace(
    span_a: np.ndarray,
    span_b: np.ndarray,
    constraints,
    rank_tol: float = DEFAULT_RANK_TOL,
) -> np.ndarray:
    """Orthonormal basis of ``span(a) & span(b) & {x : x @ M = 0 for all M}``.

    The intersection is the nullspace of the stacked projection complements
    and transposed constraint blocks; the nullspace cut uses singular
    values below ``rank_tol`` times the largest singular value.  Raises
    ``SubspaceError`` naming the block family that removed the last
    dimension.
    """
    dim = span_a.shape[0]
    if span_b.shape[0] != dim:
        raise ParameterError("span bases must live in the same space")
    blocks = [
        ("span-a", np.eye(dim) - _projector(span_a, dim)),
        ("span-b", np.eye(dim) - _projector(span_b, dim)),
    ]
    for i, m in enumerate(constraints):
        m = np.asarray(m, dtype=float)
        if m.shape[0] != dim:
            raise ParameterError(f"constraint {i} has {m.shape[0]} rows, expected {dim}")
        blocks.append((f"constraint-{i}", m.T))

    def nullspace_dim(stack: np.ndarray) -> tuple[int, np.ndarray]:
        sv = np.linalg.svd(stack, compute_uv=False)
        smax = sv[0] if len(sv) else 0.0
        if smax == 0.0:
            return dim, np.eye(dim)
        rank = int(np.sum(sv > rank_tol * smax))
        _, _, vh = np.linalg.svd(stack)
        return dim - rank, vh[rank:].T

    stack = np.vstack([b for _, b in blocks])
    ndim, basis = nullspace_dim(stack)
    if ndim == 0:
        # Re-run with blocks added one family at a time to name the culprit.
        culprit = "span-a"
        for upto in range(1, len(blocks) + 1):
            partial = np.vstack([b for _, b in blocks[:upto]])
            if nullspace_dim(partial)[0] == 0:
                culprit = blocks[upto - 1][0]
                break
        raise SubspaceError(
            f"subspace intersection is empty (collapsed by {culprit})", family=culprit
        )
    return basis


def select_eta(
    v_basis: np.ndarray,
    m_gamma_tt: np.ndarray,
    m_pi_tt: np.ndarray,
    psi_t: np.ndarray,
    phi_t: np.ndarray,
    eps_t: float,
    count: int,
    rng: np.random.Generator,
    eta_tol: float = DEFAULT_ETA_TOL,
) -> EtaSet:
    """Iteratively choose ``count`` directions inside ``span(v_basis)``.

    Each new direction is a seeded random draw in basis coordinates,
    projected orthogonal to the linear constraints generated by the earlier
    directions through the three forms (both set-overlap forms and the
    cross form), then rescaled to unit size in the ``phi_t`` form.  The
    cross-form value of each direction is recorded and flagged when it
    leaves ``[0.5 eps_t, 2 eps_t]``; equality constraints are enforced to
    ``eta_tol``.
    """
    dim = v_basis.shape[1]
    if count < 1 or count > dim:
        raise ParameterError(f"count must be in [1, {dim}], got {count}")
    k = v_basis.shape[0]
    for name, mat in (("m_gamma_tt", m_gamma_tt), ("m_pi_tt", m_pi_tt), ("psi_t", psi_t), ("phi_t", phi_t)):
        if np.asarray(mat).shape != (k, k):
            raise ParameterError(f"{name} must be {k}x{k}")

    etas = []
    flags = []
    constraint_cols = np.empty((dim, 0))
    for i in range(count):
        for attempt in range(_MAX_REDRAWS + 1):
            if attempt == _MAX_REDRAWS:
                raise EtaSelectionError(
                    f"projection annihilated {_MAX_REDRAWS} candidate directions at index {i}"
                )
            y = rng.standard_normal(dim)
            if constraint_cols.shape[1]:
                y = y - constraint_cols @ (constraint_cols.T @ y)
            if np.linalg.norm(y) < 1e-10:
                continue
            cand = v_basis @ y
            q = float(cand @ phi_t @ cand)
            if q <= 1e-12 * float(cand @ cand):
                continue
            eta = cand / np.sqrt(q)
            break
        etas.append(eta)
        norm = float(np.linalg.norm(eta))
        if not (_ETA_NORM_WINDOW[0] < norm < _ETA_NORM_WINDOW[1]):
            flags.append(f"eta-norm:{i}:{norm:.4g}")
        w = float(eta @ psi_t @ eta)
        if not (0.5 * eps_t <= w <= 2.0 * eps_t):
            flags.append(f"eta-psi-band:{i}:{w:.4g}")
        # New linear constraints for later directions, in basis coordinates,
        # kept as an orthonormal block so projection is a single multiply.
        new_cols = v_basis.T @ np.column_stack(
            [m_gamma_tt @ eta, m_pi_tt @ eta, psi_t @ eta]
        )
        combined = np.column_stack([constraint_cols, new_cols])
        q_mat, r_mat = np.linalg.qr(combined)
        keep = np.abs(np.diag(r_mat)) > 1e-12 * max(1.0, float(np.abs(np.diag(r_mat)).max(initial=0.0)))
        constraint_cols = q_mat[:, keep]

    eta_mat = np.vstack(etas)
    gram_phi = eta_mat @ phi_t @ eta_mat.T
    gram_psi = eta_mat @ psi_t @ eta_mat.T
    psi_quad = np.diag(gram_psi).copy()

    unit_err = float(np.abs(np.diag(gram_phi) - 1.0).max())
    if unit_err > eta_tol:
        raise NumericError("eta unit normalization drifted", achieved=unit_err)
    if count > 1:
        off = ~np.eye(count, dtype=bool)
        resid = max(
            float(np.abs((eta_mat @ m_gamma_tt @ eta_mat.T)[off]).max()),
            float(np.abs((eta_mat @ m_pi_tt @ eta_mat.T)[off]).max()),
            float(np.abs(gram_psi[off]).max()),
        )
        if resid > eta_tol:
            raise NumericError("eta orthogonality constraints drifted", achieved=resid)
    return EtaSet(
        etas=eta_mat,
        gram_phi=gram_phi,
        gram_psi=gram_psi,
        psi_quad=psi_quad,
        flags=tuple(flags),
    )
