"""Conjugate gradients with constant-mode deflation and extreme eigenvalue estimates."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NoConvergence

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CgConfig:
    rel_tol: float = 1e-10
    max_iter: int | None = None  # default 20 * n_dof
    preconditioner: str = "jacobi"
    deflate_constants: bool = False

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.preconditioner not in ("none", "jacobi"):
            raise ValueError("preconditioner must be 'none' or 'jacobi'")


@dataclass
class CgResult:
    x: np.ndarray
    iterations: int
    converged: bool
    residuals: list = field(default_factory=list)
    energy_errors: list = field(default_factory=list)


def _deflate(v):
    return v - v.mean()


def cg(A, b, cfg: CgConfig = CgConfig(), x0=None, track_energy=False) -> CgResult:
    """Preconditioned CG; with deflation the iteration lives on the complement of the constants.

    With ``track_energy`` the energy ``x_k^T A x_k - 2 b^T x_k`` is logged per
    iterate. It differs from the squared A-norm error by a constant.
    """
    n = A.shape[0]
    max_iter = cfg.max_iter if cfg.max_iter is not None else 20 * n
    defl = cfg.deflate_constants
    b = _deflate(b) if defl else np.asarray(b, dtype=float)
    if cfg.preconditioner == "jacobi":
        d = A.diagonal().copy()
        d[d <= 0] = 1.0
        dinv = 1.0 / d
    else:
        dinv = None

    def precond(r):
        z = r * dinv if dinv is not None else r.copy()
        return _deflate(z) if defl else z

    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    if defl:
        x = _deflate(x)
    r = b - A @ x
    if defl:
        r = _deflate(r)
    bnorm = np.linalg.norm(b)
    res = CgResult(x, 0, False)
    if bnorm == 0.0:
        res.x = np.zeros(n)
        res.converged = True
        return res
    target = cfg.rel_tol * bnorm
    z = precond(r)
    p = z.copy()
    rz = r @ z
    rnorm = np.linalg.norm(r)
    res.residuals.append(rnorm)
    if track_energy:
        res.energy_errors.append(x @ (A @ x) - 2 * b @ x)
    best_x, best_r = x.copy(), rnorm
    k = 0
    while rnorm > target and k < max_iter:
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            break
        a = rz / pAp
        x = x + a * p
        r = r - a * Ap
        if defl:
            r = _deflate(r)
        k += 1
        # recompute the true residual now and then to avoid drift
        if k % 50 == 0:
            r = b - A @ x
            if defl:
                r = _deflate(r)
        rnorm = np.linalg.norm(r)
        res.residuals.append(rnorm)
        if track_energy:
            res.energy_errors.append(x @ (A @ x) - 2 * b @ x)
        if rnorm < best_r:
            best_x, best_r = x.copy(), rnorm
        z = precond(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    if defl:
        best_x = _deflate(best_x)
    res.x, res.iterations = best_x, k
    res.converged = best_r <= target
    return res


def cg_solve(A, b, cfg: CgConfig = CgConfig(), x0=None):
    """Solve ``A x = b``; raises :class:`NoConvergence` carrying the best iterate."""
    out = cg(A, b, cfg, x0)
    if not out.converged:
        raise NoConvergence(
            f"CG stopped after {out.iterations} iterations, residual {out.residuals[-1]:.3e}", out
        )
    return out.x


@dataclass
class EigenEstimate:
    lambda_max: float
    lambda_min_nonzero: float
    iterations: int

    @property
    def condition(self) -> float:
        return self.lambda_max / self.lambda_min_nonzero


def _start_vector(n, seed, deflate):
    v = np.random.default_rng(seed).standard_normal(n)
    if deflate:
        v = _deflate(v)
    return v / np.linalg.norm(v)


def power_iteration(A, deflate=False, tol=1e-8, max_iter=10_000, seed=0):
    """Largest eigenvalue by power iteration with Rayleigh quotients.

    Converged once the Rayleigh quotient changes by less than ``tol``
    (relative) while the eigen-residual is below ``sqrt(tol)``, or once it
    changes by less than ``tol**1.5`` (clustered top of the spectrum).
    """
    v = _start_vector(A.shape[0], seed, deflate)
    theta = 0.0
    for k in range(1, max_iter + 1):
        w = A @ v
        if deflate:
            w = _deflate(w)
        theta_new = v @ w
        wn = np.linalg.norm(w)
        if wn == 0.0:
            return 0.0, k
        resid = np.linalg.norm(w - theta_new * v) / abs(theta_new)
        change = abs(theta_new - theta) / abs(theta_new)
        if (change <= tol and resid < np.sqrt(tol)) or change <= tol**1.5:
            return theta_new, k
        theta = theta_new
        v = w / wn
    raise NoConvergence("power iteration did not converge", theta)


def inverse_iteration(A, deflate=False, tol=1e-10, max_outer=300, inner_tol=1e-12, block=4, seed=1):
    """Smallest (nonzero, when deflating) eigenvalue by block inverse iteration.

    Each sweep solves ``A W = V`` column by column with Jacobi-preconditioned
    CG, then applies Rayleigh-Ritz on span(W). The block copes with
    (near-)multiple eigenvalues, e.g. the threefold first sphere mode.
    """
    n = A.shape[0]
    p = max(1, min(block, n - 1 - int(deflate)))
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((n, p))
    if deflate:
        V -= V.mean(axis=0)
    V, _ = np.linalg.qr(V)
    inner = CgConfig(rel_tol=inner_tol, max_iter=max(20 * n, 1000), preconditioner="jacobi",
                     deflate_constants=deflate)
    theta = np.full(p, np.inf)
    for k in range(1, max_outer + 1):
        W = np.empty_like(V)
        for j in range(p):
            x0 = V[:, j] / theta[j] if np.isfinite(theta[j]) and theta[j] > 0 else None
            W[:, j] = cg(A, V[:, j], inner, x0=x0).x
        if deflate:
            W -= W.mean(axis=0)
        Qb, _ = np.linalg.qr(W)
        H = Qb.T @ (A @ Qb)
        evals, evecs = np.linalg.eigh(0.5 * (H + H.T))
        V = Qb @ evecs
        if abs(evals[0] - theta[0]) <= tol * abs(evals[0]):
            return float(evals[0]), k
        theta = evals
    raise NoConvergence("inverse iteration did not converge", float(theta[0]))


def _lanczos_largest(op, n, deflate, seed, tol):
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n)
    if deflate:
        v0 = _deflate(v0)
    vals = spla.eigsh(op, k=1, which="LA", v0=v0, tol=tol, ncv=min(n - 1, 40),
                      maxiter=max(1000, 10 * n), return_eigenvectors=False)
    return float(np.max(vals))


def lanczos_extremes(A, deflate=False, seed=0, tol=1e-12, inner_tol=1e-12) -> EigenEstimate:
    """Extreme eigenvalues by Lanczos: on ``A`` for the top, on the (deflated) CG inverse for the bottom."""
    n = A.shape[0]
    calls = [0]

    def apply_a(x):
        y = A @ x
        return _deflate(y) if deflate else y

    inner = CgConfig(rel_tol=inner_tol, max_iter=max(20 * n, 1000), preconditioner="jacobi",
                     deflate_constants=deflate)

    def apply_inv(x):
        calls[0] += 1
        return cg(A, x, inner).x

    try:
        lmax = _lanczos_largest(spla.LinearOperator((n, n), matvec=apply_a, dtype=float), n, deflate, seed, tol)
        inv_max = _lanczos_largest(spla.LinearOperator((n, n), matvec=apply_inv, dtype=float), n, deflate, seed + 1, tol)
    except spla.ArpackNoConvergence as exc:
        raise NoConvergence(f"Lanczos did not converge: {exc}") from exc
    return EigenEstimate(lmax, 1.0 / inv_max, calls[0])


def lambda_extremes(A, deflate=False, seed=0, method="lanczos") -> EigenEstimate:
    """Largest and smallest (nonzero, with ``deflate``) eigenvalues of a symmetric PSD matrix.

    ``method``: ``"lanczos"`` (default), ``"power"`` (power + block inverse
    iteration), ``"dense"`` or ``"auto"`` (dense up to 300 unknowns).
    """
    n = A.shape[0]
    if method == "dense" or (method == "auto" and n <= 300) or n <= 4:
        return dense_extremes(A, deflate)
    if method == "power":
        lmax, it1 = power_iteration(A, deflate, seed=seed)
        lmin, it2 = inverse_iteration(A, deflate, seed=seed + 1)
        return EigenEstimate(float(lmax), float(lmin), it1 + it2)
    return lanczos_extremes(A, deflate, seed)


def condition_number(A, deflate=False, seed=0, method="lanczos") -> float:
    return lambda_extremes(A, deflate, seed, method).condition


def dense_extremes(A, deflate=False) -> EigenEstimate:
    """Dense symmetric eigensolve; reference for small systems."""
    M = A.toarray() if sp.issparse(A) else np.asarray(A)
    ev = np.linalg.eigvalsh(M)
    if deflate:
        # drop the eigenvalue belonging to the constant vector
        one = np.ones(len(M)) / np.sqrt(len(M))
        k = np.argmin(np.abs(ev - one @ M @ one))
        ev = np.delete(ev, k)
    return EigenEstimate(float(ev.max()), float(ev.min()), 0)


def post_normalize(u, dm, active):
    """Shift ``u`` so that its integral over the discrete manifold vanishes."""
    from .cutcell import facet_barycentric

    local, ok = active.local_index(dm.parent)
    pts, wts = dm.quadrature()
    lam = facet_barycentric(active, dm, pts[ok], local[ok])
    uq = np.einsum("fqi,fi->fq", lam, u[active.dofs[local[ok]]])
    mean = float(np.sum(wts[ok] * uq)) / float(wts[ok].sum())
    return u - mean
