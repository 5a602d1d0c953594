"""Spectral and semigroup machinery for the assembled operator.

The generalized eigenproblem A v = lambda M v (M the diagonal evolution
mass) underpins exact propagator evaluation; Markov-property and smoothing
diagnostics probe the structural guarantees of the discretization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from .assembly import DiscreteOperator


class NumericError(RuntimeError):
    """Solver failure or residual beyond tolerance."""


@dataclass
class SpectralData:
    """Lowest generalized eigenpairs, eigenvectors M-orthonormal."""

    eigenvalues: np.ndarray    # (K,) nondecreasing
    eigenvectors: np.ndarray   # (n_free, K)
    mass_diag: np.ndarray      # evolution mass used in the pairing

    @property
    def count(self) -> int:
        return len(self.eigenvalues)


def quadratic_form(op: DiscreteOperator, u: np.ndarray, v: np.ndarray | None = None) -> float:
    """Energy pairing v^T A u of free-DOF states (u, u) if v omitted)."""
    u = np.asarray(u, dtype=float)
    if u.shape != (op.n_free,):
        raise ValueError(f"state has shape {u.shape}, expected ({op.n_free},)")
    if v is None:
        v = u
    elif np.asarray(v).shape != (op.n_free,):
        raise ValueError("mismatched state dimensions")
    return float(np.asarray(v) @ (op.a_free @ u))


def lowest_pairs(a_csr, m_diag: np.ndarray, k: int,
                 residual_tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Lowest k eigenpairs of the pencil (A, diag(m)), eigenvectors
    m-orthonormal; every returned pair's residual is verified."""
    inv_sqrt_m = 1.0 / np.sqrt(m_diag)
    B = inv_sqrt_m[:, None] * a_csr.toarray() * inv_sqrt_m[None, :]
    B = 0.5 * (B + B.T)
    vals, vecs = scipy.linalg.eigh(B, subset_by_index=[0, k - 1])
    V = inv_sqrt_m[:, None] * vecs
    # column sign normalization for reproducibility across LAPACK variants
    pivot = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[pivot, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    V = V * signs[None, :]
    res = np.linalg.norm(a_csr @ V - (m_diag[:, None] * V) * vals[None, :], axis=0)
    scale = np.linalg.norm(V, axis=0)
    bad = res > residual_tol * np.maximum(scale, 1.0) * max(np.abs(vals).max(), 1.0)
    if bad.any():
        worst = float((res / np.maximum(scale, 1.0)).max())
        raise NumericError(f"eigenpair residual {worst:.3e} exceeds {residual_tol:.1e}")
    return vals, V


def spectrum(op: DiscreteOperator, k: int | None = None,
             residual_tol: float = 1e-8) -> SpectralData:
    """Lowest k generalized eigenpairs of A v = lambda M v.

    The diagonal mass reduces the pencil to a dense symmetric problem.
    """
    n = op.n_free
    if k is None:
        k = n
    if not (1 <= k <= n):
        raise ValueError(f"requested {k} eigenpairs of a {n}-DOF operator")
    m = op.mass_diag
    if (m <= 0.0).any():
        raise NumericError("evolution mass not positive definite on free DOFs")
    vals, V = lowest_pairs(op.a_free, m, k, residual_tol)
    return SpectralData(eigenvalues=vals, eigenvectors=V, mass_diag=m)


def semigroup_apply(spec: SpectralData, t: float, F: np.ndarray) -> np.ndarray:
    """Propagator exp(-t M^-1 A) applied to F through the eigenexpansion."""
    if t < 0:
        raise ValueError("time must be nonnegative")
    coeff = spec.eigenvectors.T @ (spec.mass_diag * F)
    return spec.eigenvectors @ (np.exp(-spec.eigenvalues * t) * coeff)


def markov_check(op: DiscreteOperator, trials: int, t_grid: np.ndarray,
                 seed: int = 0) -> dict:
    """Positivity and sup-norm contraction of backward-Euler steps.

    Runs random nonnegative initial vectors through the implicit steps
    (M + dt A) u+ = M u along t_grid and reports the minimum entry ever seen
    and the largest per-step sup-norm ratio.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if len(t_grid) < 1 or (np.diff(t_grid) <= 0).any():
        raise ValueError("t_grid must be strictly increasing")
    dts = np.diff(np.concatenate([[0.0], t_grid]))
    rng = np.random.default_rng(seed)
    m = op.mass_diag
    solvers = {}
    for dt in np.unique(dts):
        mat = (op.a_free * dt).tolil()
        mat.setdiag(mat.diagonal() + m)
        solvers[dt] = spla.splu(mat.tocsc())
    min_entry = np.inf
    sup_ratio = 0.0
    for _ in range(trials):
        u = np.abs(rng.standard_normal(op.n_free))
        for dt in dts:
            unew = solvers[dt].solve(m * u)
            min_entry = min(min_entry, float(unew.min()))
            denom = np.abs(u).max()
            if denom > 0:
                sup_ratio = max(sup_ratio, float(np.abs(unew).max() / denom))
            u = unew
    return {"min_entry": min_entry, "sup_ratio": sup_ratio}


def two_to_inf_norm(spec: SpectralData, t: float) -> float:
    """Operator norm of the propagator from the mass-weighted l2 norm to the
    max norm: the largest mass-weighted row norm of the eigenexpansion."""
    decay = np.exp(-2.0 * spec.eigenvalues * t)
    row2 = (spec.eigenvectors ** 2) @ decay
    return float(np.sqrt(row2.max()))


def ultracontractivity_fit(spec: SpectralData, t_grid: np.ndarray) -> dict:
    """Log-log fit of the 2->inf propagator norm against time.

    Returns the fitted slope/intercept/R^2 together with the small-t
    flattening scale (finite-dimensional saturation) and the crossover time
    1/lambda_1 beyond which pure spectral decay dominates.  Callers compare
    the slope against -gamma/4 themselves (see smoothing_exponent).
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if len(t_grid) < 3:
        raise ValueError("need at least 3 fit points")
    if (t_grid <= 0).any():
        raise ValueError("fit times must be positive")
    norms = np.array([two_to_inf_norm(spec, t) for t in t_grid])
    logt, logn = np.log(t_grid), np.log(norms)
    slope, intercept = np.polyfit(logt, logn, 1)
    fitted = slope * logt + intercept
    ss_res = float(np.sum((logn - fitted) ** 2))
    ss_tot = float(np.sum((logn - logn.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    norm0 = float(np.sqrt(((spec.eigenvectors ** 2).sum(axis=1)).max()))
    flat = t_grid[norms >= 0.8 * norm0]
    saturation = float(flat.max()) if len(flat) else 0.0
    return {
        "t": t_grid,
        "norm": norms,
        "slope": float(slope),
        "intercept": float(intercept),
        "r2": r2,
        "saturation_scale": saturation,
        "spectral_crossover": float(1.0 / spec.eigenvalues[0]),
    }


def smoothing_exponent(dim_d: float, ambient_dim: int = 2) -> float:
    """Exponent gamma = 2d / (d - N + 2) governing the 2->inf smoothing rate
    t^(-gamma/4)."""
    return 2.0 * dim_d / (dim_d - ambient_dim + 2.0)


def export_spectrum_csv(spec: SpectralData, path) -> None:
    with open(path, "w") as fh:
        fh.write("k,lambda_k\n")
        for k, lam in enumerate(spec.eigenvalues, start=1):
            fh.write(f"{k},{float(lam)!r}\n")


def export_ultracontractivity_csv(fit: dict, path) -> None:
    with open(path, "w") as fh:
        fh.write("t,norm_2_to_inf\n")
        for t, nrm in zip(fit["t"], fit["norm"]):
            fh.write(f"{float(t)!r},{float(nrm)!r}\n")
