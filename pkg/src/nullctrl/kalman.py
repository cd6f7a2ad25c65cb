"""Mode-wise Kalman rank certificate and its failure witnesses.

For each spatial eigenvalue ``gamma`` the coupled system restricted to
that mode is a linear ODE with matrix ``A(gamma) = gamma*D + Q`` and
input matrix ``R``.  The mode is controllable exactly when the Kalman
matrix

    K(gamma) = [R | A R | A^2 R | ... | A^(n-1) R]

has full row rank.  Each n x n minor of ``K`` is a polynomial in
``gamma`` of degree at most n(n-1), so the set of eigenvalues at which
the rank drops is either everything (structurally uncontrollable) or
the real-root set of a single polynomial.  That finite set is what the
certificate computes; the system is controllable over a given spectral
model precisely when no model eigenvalue hits it.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
import numpy.typing as npt
from numpy.polynomial import chebyshev as C

from .errors import InvalidKernelError, ValidationError
from .spectral import SpectralModel
from .system import CoupledSystem, FloatArray

RANK_RTOL = 1e-10
MATCH_RTOL = 1e-8


def build_Kp(system: CoupledSystem, gamma: float) -> FloatArray:
    """Kalman matrix of the mode with eigenvalue ``gamma``, shape (n, n*m)."""
    A = system.mode_matrix(gamma)
    blocks = [np.array(system.R)]
    for _ in range(system.n - 1):
        blocks.append(A @ blocks[-1])
    return np.concatenate(blocks, axis=1)


def _column_normalized(K: FloatArray) -> FloatArray:
    norms = np.linalg.norm(K, axis=0)
    return K / np.where(norms == 0.0, 1.0, norms)


def rank_at(system: CoupledSystem, gamma: float) -> int:
    """Numerical rank of K(gamma), with relative threshold 1e-10.

    Columns are normalized to unit length before the SVD.  The blocks
    of the Kalman matrix grow like gamma^j, so without the
    normalization the smallest singular value of a perfectly
    controllable mode shrinks like 1/gamma relative to the largest and
    a fixed relative threshold would misreport the rank at large
    eigenvalues.  Scaling columns leaves the rank itself unchanged.
    """
    s = np.linalg.svd(_column_normalized(build_Kp(system, gamma)),
                      compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > RANK_RTOL * s[0]))


def kernel_vector(system: CoupledSystem, gamma: float) -> FloatArray:
    """Unit left null vector of K(gamma) (least left singular vector).

    Computed from the column-normalized matrix, whose left kernel is
    the same.  The sign is fixed so the entry of largest magnitude is
    positive, keeping results reproducible across runs.
    """
    u, _, _ = np.linalg.svd(_column_normalized(build_Kp(system, gamma)))
    z = u[:, -1]
    lead = np.argmax(np.abs(z))
    if z[lead] < 0:
        z = -z
    return z


def minor_polynomials(system: CoupledSystem, gamma_lo: float) -> tuple[FloatArray, FloatArray]:
    """Fit every n x n minor of K(gamma) as a Chebyshev series in gamma.

    The minors are sampled at ``n(n-1) + 1`` Chebyshev points of the
    interval ``[gamma_lo, gamma_lo + n(n-1) + 1]``, which determines a
    degree-n(n-1) polynomial exactly.  Returns the sample points and a
    ``(n_minors, deg+1)`` coefficient array in the Chebyshev basis of
    that interval.
    """
    if not gamma_lo > 0.0:
        raise ValidationError(f"gamma_lo must be positive, got {gamma_lo}")
    n = system.n
    deg = n * (n - 1)
    lo, hi = gamma_lo, gamma_lo + deg + 1.0
    u = C.chebpts1(deg + 1)
    samples = lo + 0.5 * (u + 1.0) * (hi - lo)
    cols = list(combinations(range(n * system.m), n))
    vals = np.empty((deg + 1, len(cols)))
    for i, g in enumerate(samples):
        K = build_Kp(system, g)
        for j, sel in enumerate(cols):
            vals[i, j] = np.linalg.det(K[:, sel])
    coeffs = C.chebfit(u, vals, deg).T
    return samples, coeffs


@dataclass(frozen=True)
class KalmanVerdict:
    """Outcome of the rank certificate over a spectral model.

    ``controllable`` is True when every model eigenvalue has a full-rank
    Kalman matrix.  ``bad_gammas`` lists the confirmed positive real
    values at which the rank drops (present in both outcomes; empty when
    the rank never drops).  On failure, ``p0`` is the index of the first
    offending eigenvalue, ``gamma_p0`` its value and ``z0`` a unit left
    null vector of the corresponding Kalman matrix.
    """

    controllable: bool
    bad_gammas: tuple[float, ...]
    checked_tolerance: float
    degenerate: bool = False
    p0: int | None = None
    gamma_p0: float | None = None
    z0: FloatArray | None = None


def _cluster(roots: np.ndarray) -> list[float]:
    out: list[float] = []
    for r in np.sort(roots):
        if out and abs(r - out[-1]) <= MATCH_RTOL * (1.0 + abs(out[-1])):
            out[-1] = 0.5 * (out[-1] + r)
        else:
            out.append(float(r))
    return out


def bad_set(system: CoupledSystem, gamma_lo: float) -> tuple[list[float], bool]:
    """Confirmed rank-dropping values of gamma, plus a degeneracy flag.

    A rank drop forces every n x n minor to vanish, so the bad set is
    contained in the real-root set of each minor that is not
    identically zero.  Candidates are therefore collected from the
    companion-matrix roots of every nonzero minor polynomial and each
    one is confirmed by :func:`rank_at`.  (Summing squared minors into
    a single polynomial would make every true root even-multiplicity,
    which root solvers split into complex pairs that escape a real-root
    filter; per-minor roots are generically simple and well
    conditioned.)  The flag is True when the rank is below n at every
    sample point, i.e. the minors vanish identically.
    """
    samples, coeffs = minor_polynomials(system, gamma_lo)
    if all(rank_at(system, g) < system.n for g in samples):
        return [], True
    deg = system.n * (system.n - 1)
    lo, hi = gamma_lo, gamma_lo + deg + 1.0
    candidates: list[float] = []
    for c in coeffs:
        scale = np.abs(c).max()
        if scale == 0.0:
            continue
        c = C.chebtrim(c, tol=1e-12 * scale)
        if len(c) < 2:
            continue
        roots_u = C.chebroots(c)
        real = roots_u[np.abs(roots_u.imag)
                       <= 1e-6 * (1.0 + np.abs(roots_u.real))].real
        candidates.extend(lo + 0.5 * (real + 1.0) * (hi - lo))
    gammas = np.asarray(candidates)
    confirmed = [g for g in _cluster(gammas[gammas > 0.0])
                 if rank_at(system, g) < system.n]
    return confirmed, False


def kalman_certificate(system: CoupledSystem, model: SpectralModel) -> KalmanVerdict:
    """Decide controllability of the system over the model's spectrum.

    The certificate is finite: it fits the minors once, extracts the
    real roots where the rank can drop and compares them against the
    model eigenvalues with relative tolerance 1e-8.
    """
    gamma_lo = float(model.eigenvalues[0])
    bad, degenerate = bad_set(system, gamma_lo)
    if degenerate:
        g0 = gamma_lo
        return KalmanVerdict(
            controllable=False,
            bad_gammas=(),
            checked_tolerance=MATCH_RTOL,
            degenerate=True,
            p0=0,
            gamma_p0=g0,
            z0=kernel_vector(system, g0),
        )
    for p, gamma in enumerate(model.eigenvalues):
        for b in bad:
            if abs(gamma - b) <= MATCH_RTOL * (1.0 + gamma):
                if rank_at(system, float(gamma)) < system.n:
                    return KalmanVerdict(
                        controllable=False,
                        bad_gammas=tuple(bad),
                        checked_tolerance=MATCH_RTOL,
                        p0=int(p),
                        gamma_p0=float(gamma),
                        z0=kernel_vector(system, float(gamma)),
                    )
    return KalmanVerdict(
        controllable=True,
        bad_gammas=tuple(bad),
        checked_tolerance=MATCH_RTOL,
    )


@dataclass(frozen=True)
class InvisibleSolution:
    """Adjoint trajectory invisible to the observation operator.

    The solution is ``phi(t) = z(t) * phi_p0(x)`` with coefficient
    ``z(t) = expm(-(gamma*D + Q)^T (T - t)) z0`` and ``z0`` a unit left
    null vector of the Kalman matrix at ``gamma``.  By Cayley-Hamilton,
    ``R^T z(t)`` vanishes identically although ``phi(0)`` does not: the
    observation sees nothing while the state is nonzero.
    """

    system: CoupledSystem
    model: SpectralModel
    mode_index: int
    gamma: float
    z0: FloatArray
    horizon: float

    def coefficient(self, t) -> FloatArray:
        """Coefficient vector z(t); accepts a scalar or an array of times."""
        from scipy.linalg import expm

        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t_arr < 0.0) or np.any(t_arr > self.horizon):
            raise ValidationError("time outside [0, horizon]")
        At = self.system.mode_matrix(self.gamma).T
        mats = expm(-At[None, :, :] * (self.horizon - t_arr)[:, None, None])
        out = mats @ self.z0
        return out[0] if np.isscalar(t) or np.ndim(t) == 0 else out

    def observation(self, t) -> FloatArray:
        """R^T z(t), the observed trace of the invisible solution."""
        return self.coefficient(t) @ self.system.R

    def field(self, t: float, nodes: FloatArray | None = None) -> FloatArray:
        """Full space-time value, shape (npts, n, n_comp)."""
        phi = self.model.eigenfunctions(nodes)[self.mode_index]  # (npts, n_comp)
        z = self.coefficient(float(t))
        return z[None, :, None] * phi[:, None, :]


def invisible_adjoint_solution(
    system: CoupledSystem,
    model: SpectralModel,
    mode_index: int,
    z0: npt.ArrayLike,
    horizon: float,
) -> InvisibleSolution:
    """Package a certified rank failure as an explicit invisible solution.

    Raises
    ------
    InvalidKernelError
        If ``z0`` is not unit length or not in the left kernel of the
        Kalman matrix at the selected eigenvalue (residual above 1e-8).
    """
    if not 0 <= mode_index < model.num_modes:
        raise ValidationError(f"mode_index {mode_index} out of range")
    if not horizon > 0.0:
        raise ValidationError(f"horizon must be positive, got {horizon}")
    z0 = np.asarray(z0, dtype=float).ravel()
    if z0.shape != (system.n,):
        raise InvalidKernelError(f"z0 must have shape ({system.n},), got {z0.shape}")
    nrm = np.linalg.norm(z0)
    if abs(nrm - 1.0) > 1e-8:
        raise InvalidKernelError(f"z0 must be a unit vector, |z0| = {nrm:.12g}")
    gamma = float(model.eigenvalues[mode_index])
    K = build_Kp(system, gamma)
    resid = float(np.linalg.norm(K.T @ z0))
    if resid > 1e-8:
        raise InvalidKernelError(
            f"z0 is not in the kernel of K^T at gamma={gamma:.6g}: residual {resid:.3e}"
        )
    z0 = z0 / nrm
    z0.flags.writeable = False
    return InvisibleSolution(
        system=system,
        model=model,
        mode_index=mode_index,
        gamma=gamma,
        z0=z0,
        horizon=float(horizon),
    )
