"""Penalized least-squares solver for tensor-product ANOVA models.

The estimate is eta(x) = sum_j d_j phi_j(x) + sum_i c_i R_theta(z_i, x) with
phi_j the null-basis functions, z_i a random subset of q observed rows and
R_theta = sum_delta theta_delta R_delta.  Coefficients minimize

    ||y - T d - K c||^2 + nlam * c' Q c

where T is the n x M null design, K the n x q kernel design and Q the q x q
kernel Gram at the basis rows.  With q = n and basis rows equal to the data
this reproduces the classic full-rank smoothing-spline solution; with q < n
it is the random-basis approximation whose cost per smoothing-parameter
choice is O(n q^2).

Elimination order: c is removed through a Cholesky factorization of
G = K'K + nlam * Q_r (Q_r carries a small stabilizing ridge), then the M x M
Schur complement is solved for d.  The effective degrees of freedom tr(A)
come from the same factorizations.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .data import Dataset
from .kernels import ModelSpec, null_basis_matrix, term_gram, term_gram_diag
from .util import InputError, NumericalError, derive_rng, round_half_up

# Relative size of the ridge added to Q before factorization.
RIDGE_SCALE = 1e-10


@dataclass(frozen=True)
class SmoothingParams:
    """Smoothing parameters on log scale: one nlam, one theta per term."""

    log10_nlam: float
    log10_theta: tuple[float, ...]

    def __post_init__(self):
        if not np.isfinite(self.log10_nlam):
            raise InputError("log10_nlam must be finite")
        if any(not np.isfinite(v) for v in self.log10_theta):
            raise InputError("log10_theta entries must be finite")

    @property
    def nlam(self) -> float:
        return 10.0 ** self.log10_nlam

    @property
    def theta(self) -> np.ndarray:
        return 10.0 ** np.asarray(self.log10_theta, dtype=float)

    @classmethod
    def from_values(cls, nlam: float, theta) -> "SmoothingParams":
        theta = np.asarray(theta, dtype=float)
        if nlam <= 0 or (theta <= 0).any():
            raise InputError("nlam and theta must be positive")
        return cls(float(np.log10(nlam)), tuple(float(v) for v in np.log10(theta)))


@dataclass(frozen=True)
class BasisSelection:
    """Indices of the rows used as kernel basis points."""

    indices: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=int)
        if idx.ndim != 1 or idx.size == 0:
            raise InputError("basis selection needs a nonempty index vector")
        if np.unique(idx).size != idx.size:
            raise InputError("basis indices must be distinct")
        object.__setattr__(self, "indices", np.sort(idx))

    @property
    def q(self) -> int:
        return self.indices.size


def basis_count(n: int, coef: float = 10.0, exp: float = 2.0 / 9.0) -> int:
    """Default basis-size rule q = round(coef * n^exp)."""
    if n < 1 or coef <= 0:
        raise InputError("basis count needs n >= 1 and coef > 0")
    return round_half_up(coef * float(n) ** exp)


def select_basis(n: int, q: int, seed: int | None = None) -> BasisSelection:
    """Draw q basis rows uniformly without replacement from n rows."""
    if not 1 <= q <= n:
        raise InputError(f"basis size {q} outside [1, {n}]")
    rng = derive_rng(0 if seed is None else seed, 11)
    idx = rng.choice(n, size=q, replace=False)
    return BasisSelection(indices=idx, seed=seed)


@dataclass
class DesignBlocks:
    """Per-term design blocks for one dataset and basis selection.

    Everything here is independent of the smoothing parameters, so a fit can
    reuse the blocks across theta and nlam choices.  ``part_traces`` holds
    sum_i R_delta(x_i, x_i) over the fitted rows, used by the starting-value
    algorithm.
    """

    t: np.ndarray
    k_parts: tuple[np.ndarray, ...]
    q_parts: tuple[np.ndarray, ...]
    part_traces: np.ndarray
    basis: BasisSelection
    basis_rows: np.ndarray

    @property
    def n(self) -> int:
        return self.t.shape[0]

    @property
    def n_null(self) -> int:
        return self.t.shape[1]

    @property
    def q(self) -> int:
        return self.basis.q

    @property
    def n_penalized(self) -> int:
        return len(self.k_parts)

    def combine(self, theta) -> tuple[np.ndarray, np.ndarray]:
        """Weighted kernel design and penalty, K(theta) and Q(theta)."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_penalized,):
            raise InputError(f"theta must have length {self.n_penalized}")
        k = theta[0] * self.k_parts[0]
        q = theta[0] * self.q_parts[0]
        for w, kp, qp in zip(theta[1:], self.k_parts[1:], self.q_parts[1:]):
            k += w * kp
            q += w * qp
        return k, q


def assemble_blocks(dataset: Dataset, spec: ModelSpec, basis: BasisSelection) -> DesignBlocks:
    """Build T and the per-term K_delta, Q_delta blocks.

    Raises if the null design is rank deficient (for example a constant
    predictor column duplicating the intercept) or the sample cannot
    identify the null space.
    """
    if spec.n_penalized == 0:
        raise InputError("model has no penalized terms; nothing to smooth")
    m = spec.null_dim
    if dataset.n < m + 1:
        raise InputError(f"need at least {m + 1} rows to fit {m} null coefficients")
    if basis.q <= m:
        raise InputError(f"basis size {basis.q} must exceed the null dimension {m}")
    if basis.indices[-1] >= dataset.n:
        raise InputError("basis indices exceed the dataset")
    t = null_basis_matrix(spec, dataset.x)
    if np.linalg.matrix_rank(t) < m:
        raise InputError("null basis is rank deficient on this sample")
    z = dataset.x[basis.indices]
    k_parts = []
    q_parts = []
    traces = []
    for term in spec.penalized_terms:
        k_parts.append(term_gram(term, spec.domains, dataset.x, z))
        q_block = term_gram(term, spec.domains, z, z)
        q_parts.append((q_block + q_block.T) / 2.0)
        traces.append(float(term_gram_diag(term, spec.domains, dataset.x).sum()))
    return DesignBlocks(
        t=t,
        k_parts=tuple(k_parts),
        q_parts=tuple(q_parts),
        part_traces=np.asarray(traces),
        basis=basis,
        basis_rows=z.copy(),
    )


def assemble(dataset: Dataset, spec: ModelSpec, basis: BasisSelection, theta) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Assemble (T, K, Q) for one theta: the inputs of the penalized solve."""
    blocks = assemble_blocks(dataset, spec, basis)
    k, q = blocks.combine(theta)
    return blocks.t, k, q


class CompiledDesign:
    """Cross products of (T, K, Q, y), reused across nlam evaluations.

    For a fixed theta the nlam profile only changes the factorization of
    G = K'K + nlam Q_r, so the O(n q^2) products are formed once here.
    """

    def __init__(self, t: np.ndarray, k: np.ndarray, q: np.ndarray, y: np.ndarray):
        t = np.asarray(t, dtype=float)
        k = np.asarray(k, dtype=float)
        q = np.asarray(q, dtype=float)
        y = np.asarray(y, dtype=float)
        n, m = t.shape
        if k.shape[0] != n or y.shape != (n,):
            raise InputError("T, K and y row counts disagree")
        nq = k.shape[1]
        if q.shape != (nq, nq):
            raise InputError("Q must be square with K's column count")
        if not np.allclose(q, q.T, atol=1e-10, rtol=0.0):
            raise InputError("Q must be symmetric")
        self.t = t
        self.k = k
        self.y = y
        self.n = n
        self.m = m
        self.nq = nq
        ridge = RIDGE_SCALE * np.trace(q) / nq
        self.q_r = q + ridge * np.eye(nq)
        self.ktk = k.T @ k
        self.ktt = k.T @ t
        self.kty = k.T @ y
        self.ttt = t.T @ t
        self.tty = t.T @ y
        self.yty = float(y @ y)

    def factorize(self, nlam: float) -> "PenalizedFactor":
        return PenalizedFactor(self, nlam)


class PenalizedFactor:
    """Factorized penalized normal equations at one (theta, nlam) choice."""

    def __init__(self, design: CompiledDesign, nlam: float):
        if nlam <= 0 or not np.isfinite(nlam):
            raise InputError("nlam must be positive and finite")
        self.design = design
        self.nlam = float(nlam)
        g = design.ktk + nlam * design.q_r
        try:
            self._g_chol = sla.cho_factor(g, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"solver: singular penalized system (nlam={nlam:g})") from exc
        self._u = sla.cho_solve(self._g_chol, design.ktt, check_finite=False)
        schur = design.ttt - design.ktt.T @ self._u
        schur = (schur + schur.T) / 2.0
        try:
            self._s_chol = sla.cho_factor(schur, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("solver: null-space system is singular") from exc

    def coefficients(self, y: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Solve for (d, c); default response is the one used to compile."""
        des = self.design
        if y is None:
            kty, tty = des.kty, des.tty
        else:
            y = np.asarray(y, dtype=float)
            kty, tty = des.k.T @ y, des.t.T @ y
        gikty = sla.cho_solve(self._g_chol, kty, check_finite=False)
        d = sla.cho_solve(self._s_chol, tty - des.ktt.T @ gikty, check_finite=False)
        c = gikty - self._u @ d
        return d, c

    def fitted(self, d: np.ndarray, c: np.ndarray) -> np.ndarray:
        return self.design.t @ d + self.design.k @ c

    def apply(self, y: np.ndarray) -> np.ndarray:
        """The hat map A(nlam) applied to a response vector."""
        d, c = self.coefficients(y)
        return self.fitted(d, c)

    def trace_hat(self) -> float:
        """tr A(nlam) without forming A.

        Uses tr(A) = (M + q) - nlam * (tr(G^{-1} Q_r) + tr(S^{-1} U' Q_r U))
        with U = G^{-1} K'T.
        """
        des = self.design
        giq = sla.cho_solve(self._g_chol, des.q_r, check_finite=False)
        tr1 = float(np.trace(giq))
        w = self._u.T @ (des.q_r @ self._u)
        tr2 = float(np.trace(sla.cho_solve(self._s_chol, w, check_finite=False)))
        return des.m + des.nq - self.nlam * (tr1 + tr2)


def solve_penalized(t, k, q, y, nlam: float) -> tuple[np.ndarray, np.ndarray]:
    """Minimize ||y - T d - K c||^2 + nlam c'Qc; return (d, c)."""
    design = CompiledDesign(t, k, q, y)
    return design.factorize(nlam).coefficients()


def _stacked_fit(design: CompiledDesign, nlam: float):
    """Penalized fit via one SVD of the stacked least-squares form.

    The penalized problem equals ordinary least squares of [y; 0] on
    [[T, K]; [0, sqrt(nlam) L']] with Q_r = LL', which an SVD solves at
    the square root of the normal equations' condition number.  Used when
    the Cholesky of K'K + nlam Q_r fails, i.e. when nlam is far below the
    conditioning floor of K'K.  Returns (d, c, fitted, trace_a).
    """
    try:
        l_chol = sla.cholesky(design.q_r, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("solver: penalty matrix is not positive definite") from exc
    x_top = np.hstack([design.t, design.k])
    x_bot = np.hstack([
        np.zeros((design.nq, design.m)),
        float(nlam) ** 0.5 * l_chol.T,
    ])
    stack = np.vstack([x_top, x_bot])
    u, sv, vt = np.linalg.svd(stack, full_matrices=False)
    keep = sv > sv[0] * max(stack.shape) * np.finfo(float).eps
    u, sv, vt = u[:, keep], sv[keep], vt[keep]
    rhs = u[: design.n].T @ design.y
    beta = vt.T @ (rhs / sv)
    d, c = beta[: design.m], beta[design.m:]
    fitted = x_top @ beta
    half = (x_top @ vt.T) / sv
    trace_a = float(np.einsum("ij,ij->", half, u[: design.n]))
    return d, c, fitted, trace_a


def hat_trace(t, k, q, nlam: float):
    """Return (tr A(nlam), apply_A) for the penalized smoother.

    ``apply_A`` maps a response vector to its fitted values under the same
    factorization, so linearity and idempotence properties can be checked
    directly.
    """
    n = np.asarray(t).shape[0]
    design = CompiledDesign(t, k, q, np.zeros(n))
    factor = design.factorize(nlam)
    return factor.trace_hat(), factor.apply


def gcv_from_fit(rss: float, trace_a: float, n: int) -> float:
    """Generalized cross-validation score from residual sum of squares."""
    denom = (n - trace_a) / n
    if denom <= 0.0:
        return float("inf")
    return (rss / n) / denom**2


@dataclass
class FitResult:
    """A fitted model: coefficients, effective degrees of freedom, score."""

    d: np.ndarray
    c: np.ndarray
    fitted: np.ndarray
    trace_a: float
    gcv: float
    params: SmoothingParams
    basis: BasisSelection
    basis_rows: np.ndarray


def fit_model(dataset: Dataset, spec: ModelSpec, params: SmoothingParams,
              basis: BasisSelection | None = None,
              blocks: DesignBlocks | None = None) -> FitResult:
    """Fit at fixed smoothing parameters; assembles blocks unless given.

    Falls back to a stacked SVD solve when the penalized normal equations
    are too ill-conditioned to factorize, so any positive nlam yields a
    fit.
    """
    if blocks is None:
        if basis is None:
            raise InputError("fit_model needs a basis selection or prebuilt blocks")
        blocks = assemble_blocks(dataset, spec, basis)
    k, q = blocks.combine(params.theta)
    design = CompiledDesign(blocks.t, k, q, dataset.y)
    try:
        factor = design.factorize(params.nlam)
        d, c = factor.coefficients()
        fitted = factor.fitted(d, c)
        trace_a = factor.trace_hat()
    except NumericalError:
        d, c, fitted, trace_a = _stacked_fit(design, params.nlam)
    resid = dataset.y - fitted
    score = gcv_from_fit(float(resid @ resid), trace_a, dataset.n)
    return FitResult(d=d, c=c, fitted=fitted, trace_a=trace_a, gcv=score,
                     params=params, basis=blocks.basis, basis_rows=blocks.basis_rows)


@dataclass
class EigenSystem:
    """Orthonormal complement basis Z of span(T) and eigenvalues of Z'KZ."""

    z: np.ndarray
    values: np.ndarray


def demmler_reinsch(t: np.ndarray, k_full: np.ndarray) -> EigenSystem:
    """Diagonalize the full-basis smoother on the complement of span(T).

    Returns Z (b x (b - M), orthonormal, Z'T = 0) and the ascending
    eigenvalues of Z' K Z, so that I - A(lam) = blam Z (D + blam I)^{-1} Z'
    with blam the penalty weight b * lam.  O(b^3); intended for validation
    problems, not production fits.
    """
    t = np.asarray(t, dtype=float)
    k_full = np.asarray(k_full, dtype=float)
    b, m = t.shape
    if k_full.shape != (b, b):
        raise InputError("K must be square over the same rows as T")
    qfull, r = np.linalg.qr(t, mode="complete")
    diag = np.abs(np.diag(r[:m, :m]))
    if diag.min() <= b * np.finfo(float).eps * max(diag.max(), 1.0):
        raise InputError("null basis is rank deficient; cannot form the complement")
    z0 = qfull[:, m:]
    w = z0.T @ k_full @ z0
    w = (w + w.T) / 2.0
    values, vecs = np.linalg.eigh(w)
    return EigenSystem(z=z0 @ vecs, values=values)


def predict(fit: FitResult, spec: ModelSpec, new_raw: np.ndarray,
            theta: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate a fitted model at raw-scale rows.

    Continuous values outside the training range are clamped to the range
    boundary, flagged in the returned mask, and reported once via a warning.
    Unknown discrete levels raise.  Returns (predictions, out_of_range).
    """
    new_raw = np.atleast_2d(np.asarray(new_raw, dtype=float))
    if new_raw.shape[1] != spec.n_predictors:
        raise InputError(f"expected {spec.n_predictors} predictor columns")
    cols = []
    flags = np.zeros(new_raw.shape[0], dtype=bool)
    for j, dom in enumerate(spec.domains):
        scaled, mask = dom.rescale(new_raw[:, j])
        cols.append(scaled)
        flags |= mask
    if flags.any():
        warnings.warn(
            f"{int(flags.sum())} prediction row(s) outside the training range; clamped",
            stacklevel=2,
        )
    xs = np.column_stack(cols)
    if theta is None:
        theta = fit.params.theta
    eta = null_basis_matrix(spec, xs) @ fit.d
    for term, w in zip(spec.penalized_terms, theta):
        eta += w * (term_gram(term, spec.domains, xs, fit.basis_rows) @ fit.c)
    return eta, flags
