"""Matrix exponentials, spectral diagnostics and the decay envelope of e^{tA}.

Everything here works on small dense matrices (d <= 8).  ``expm`` accepts a
stack of matrices with shape ``(..., n, n)`` so that the simulation code can
exponentiate one matrix per jump time in a single call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NumericError

__all__ = [
    "SpectralProfile",
    "as_matrix",
    "expm",
    "matrix_exponential",
    "operator_norm",
    "spectral_profile",
    "gaussian_convolution_covariance",
    "flow_integral",
]

# Higham (2005) degrees and backward-error thresholds for the 1-norm.
_PADE_DEGREES = (3, 5, 7, 9, 13)
_PADE_THETA = (
    1.495585217958292e-2,
    2.539398330063230e-1,
    9.504178996162932e-1,
    2.097847961257068e0,
    5.371920351148152e0,
)
_PADE_COEFFS = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (
        17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0,
    ),
    13: (
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
        1187353796428800.0, 129060195264000.0, 10559470521600.0,
        670442572800.0, 33522128640.0, 1323241920.0, 40840800.0, 960960.0,
        16380.0, 182.0, 1.0,
    ),
}


def as_matrix(A, name="A"):
    """Return ``A`` as a finite float square matrix or raise InvalidInputError."""
    M = np.array(A, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise InvalidInputError(f"{name} must be a non-empty square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return M


def _pade(A, m, eye):
    c = _PADE_COEFFS[m]
    A2 = A @ A
    if m == 13:
        A4 = A2 @ A2
        A6 = A4 @ A2
        U = A @ (A6 @ (c[13] * A6 + c[11] * A4 + c[9] * A2)
                 + c[7] * A6 + c[5] * A4 + c[3] * A2 + c[1] * eye)
        V = (A6 @ (c[12] * A6 + c[10] * A4 + c[8] * A2)
             + c[6] * A6 + c[4] * A4 + c[2] * A2 + c[0] * eye)
    else:
        powers = [eye, A2]
        for _ in range(2, (m + 1) // 2):
            powers.append(powers[-1] @ A2)
        U = sum(c[k] * powers[k // 2] for k in range(m, 0, -2))
        U = A @ U
        V = sum(c[k] * powers[k // 2] for k in range(m - 1, -1, -2))
    return np.linalg.solve(V - U, V + U)


def expm(A):
    """Matrix exponential by scaling and squaring with a diagonal Pade approximant.

    ``A`` may be a single matrix or a stack ``(..., n, n)``.  One degree and
    squaring count is chosen for the whole stack from its largest 1-norm.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise InvalidInputError(f"expm needs square matrices, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError("expm argument has non-finite entries")
    n = A.shape[-1]
    eye = np.broadcast_to(np.eye(n), A.shape)
    if A.size == 0:
        return np.array(eye)
    norm1 = float(np.max(np.sum(np.abs(A), axis=-2))) if A.size else 0.0
    for m, theta in zip(_PADE_DEGREES[:-1], _PADE_THETA[:-1]):
        if norm1 <= theta:
            return _pade(A, m, eye)
    s = 0
    if norm1 > _PADE_THETA[-1]:
        s = max(0, int(np.ceil(np.log2(norm1 / _PADE_THETA[-1]))))
    F = _pade(A / 2.0**s, 13, eye)
    for _ in range(s):
        F = F @ F
    return F


def matrix_exponential(A, t=1.0):
    """Return e^{tA} for a square matrix ``A`` and finite real ``t``."""
    M = as_matrix(A)
    t = float(t)
    if not np.isfinite(t):
        raise InvalidInputError("t must be finite")
    return expm(t * M)


def operator_norm(M):
    """Spectral norm sup_{|x|=1} |Mx|, vectorised over leading axes."""
    M = np.asarray(M, dtype=float)
    return np.linalg.svd(M, compute_uv=False)[..., 0]


def flow_integral(A, v, t):
    """Return int_0^t e^{sA} v ds using one augmented exponential."""
    A = as_matrix(A)
    d = A.shape[0]
    aug = np.zeros((d + 1, d + 1))
    aug[:d, :d] = A
    aug[:d, d] = np.asarray(v, dtype=float).reshape(d)
    return expm(float(t) * aug)[:d, d]


@dataclass(frozen=True)
class SpectralProfile:
    eigenvalues: tuple
    strictly_stable: bool
    weakly_stable_semisimple: bool
    envelope_c: float
    envelope_lambda: float
    defective: tuple = ()

    @property
    def max_real_part(self):
        return max(ev.real for ev in self.eigenvalues)

    def envelope(self, t):
        """Certified bound c*exp(-lambda*t) on ||e^{tA}||."""
        return self.envelope_c * np.exp(-self.envelope_lambda * np.asarray(t, dtype=float))


def _cluster(eigs, tol):
    clusters = []
    for ev in eigs:
        for cl in clusters:
            if min(abs(ev - other) for other in cl) <= tol:
                cl.append(ev)
                break
        else:
            clusters.append([ev])
    return clusters


def _numeric_rank(M, tol):
    sv = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(sv > tol))


ENVELOPE_GRID = np.concatenate([[0.0], np.logspace(-3, 3, 601)])


def spectral_profile(A):
    """Eigenvalues, stability flags and a grid-certified envelope for e^{tA}.

    Eigenvalues are clustered at ``1e-6*||A||`` (split Jordan blocks drift
    apart by about sqrt(machine eps)); the geometric multiplicity of each
    cluster is ``d - rank(A - mean*I)`` with rank cut at ``1e-8*||A||``.
    """
    A = as_matrix(A)
    d = A.shape[0]
    scale = max(float(np.linalg.norm(A, 2)), 1.0)
    try:
        eigs = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericError("eigenvalue solver did not converge", matrix=A.tolist()) from exc
    real_tol = 1e-12 * scale
    defective = []
    for cl in _cluster(list(eigs), 1e-6 * scale):
        lam = complex(np.mean(cl))
        geo = d - _numeric_rank(A - lam * np.eye(d), 1e-8 * scale)
        if geo < len(cl):
            defective.append(lam)
    max_re = float(np.max(eigs.real))
    strictly = max_re < -real_tol
    imaginary_defective = [lam for lam in defective if abs(lam.real) <= 1e-6 * scale]
    weakly = max_re <= 1e-6 * scale and not imaginary_defective

    normal = np.linalg.norm(A @ A.T - A.T @ A) <= 1e-12 * scale**2
    if strictly and normal:
        lam, c = -max_re, 1.0
    else:
        lam = 0.99 * (-max_re) if strictly else 0.0
        if weakly:
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                norms = np.array([operator_norm(expm(t * A)) for t in ENVELOPE_GRID])
                log_ratio = np.log(norms) + lam * ENVELOPE_GRID
            log_ratio = log_ratio[np.isfinite(log_ratio)]
            # 1% headroom covers the gaps between grid points
            c = max(float(np.exp(np.max(log_ratio))) * 1.01, 1.0)
        else:
            c = float("inf")
    return SpectralProfile(
        eigenvalues=tuple(complex(e) for e in eigs),
        strictly_stable=bool(strictly),
        weakly_stable_semisimple=bool(weakly),
        envelope_c=c,
        envelope_lambda=float(lam),
        defective=tuple(defective),
    )


def gaussian_convolution_covariance(A, Q, t):
    """Covariance int_0^t e^{sA} Q e^{sA^T} ds via the Van Loan block exponential."""
    A = as_matrix(A)
    Q = as_matrix(Q, "Q")
    if Q.shape != A.shape:
        raise InvalidInputError("Q and A must have the same shape")
    scale = max(float(np.max(np.abs(Q))), 1.0)
    if np.max(np.abs(Q - Q.T)) > 1e-10 * scale:
        raise InvalidInputError("Q must be symmetric")
    if np.min(np.linalg.eigvalsh(Q)) < -1e-10 * scale:
        raise InvalidInputError("Q must be positive semi-definite")
    t = float(t)
    if t < 0 or not np.isfinite(t):
        raise InvalidInputError("t must be finite and non-negative")
    d = A.shape[0]
    if t == 0.0:
        return np.zeros((d, d))
    block = np.zeros((2 * d, 2 * d))
    block[:d, :d] = -A
    block[:d, d:] = Q
    block[d:, d:] = A.T
    F = expm(t * block)
    sigma = F[d:, d:].T @ F[:d, d:]
    return 0.5 * (sigma + sigma.T)
