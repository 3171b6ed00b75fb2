"""Linear-Gaussian system definition, validation, and scalar spectral bounds.

The covariance bound recursion never touches the matrices directly; it only
needs ten scalars extracted here: extreme eigenvalues of the symmetric
products A A^T, (A-BK)(A-BK)^T, C C^T and of the noise covariances Q, R.
Taking the symmetric products keeps the spectra real and nonnegative for
arbitrary (possibly non-normal) A, which is exactly the form the bound
inequalities are stated in.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateObservation,
    DimensionMismatch,
    NotControllable,
    NotObservable,
    NotPositiveDefinite,
)

__all__ = ["LinearSystem", "ValidatedSystem", "ScalarBounds",
           "validate_system", "derive_scalar_bounds"]

PD_MIN_EIG = 1e-12
RANK_SV_RTOL = 1e-9


def _as_matrix(value, rows: int, cols: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (rows, cols):
        raise DimensionMismatch(f"{name} must be {rows}x{cols}, got {arr.shape}")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class LinearSystem:
    """Discrete-time dynamics x' = Ax + Bu + w, measurements y = Cx + v.

    w ~ N(0, Q), v ~ N(0, R); K is the trajectory-tracking feedback gain
    applied as u = u_nom - K (x_est - x_nom).
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    K: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"A must be square, got shape {A.shape}")
        n = A.shape[0]
        B = np.asarray(self.B, dtype=float)
        if B.ndim != 2 or B.shape[0] != n:
            raise DimensionMismatch(f"B must have {n} rows, got shape {B.shape}")
        p = B.shape[1]
        C = np.asarray(self.C, dtype=float)
        if C.ndim != 2 or C.shape[1] != n:
            raise DimensionMismatch(f"C must have {n} columns, got shape {C.shape}")
        m = C.shape[0]
        object.__setattr__(self, "A", _as_matrix(A, n, n, "A"))
        object.__setattr__(self, "B", _as_matrix(B, n, p, "B"))
        object.__setattr__(self, "C", _as_matrix(C, m, n, "C"))
        object.__setattr__(self, "Q", _as_matrix(self.Q, n, n, "Q"))
        object.__setattr__(self, "R", _as_matrix(self.R, m, m, "R"))
        object.__setattr__(self, "K", _as_matrix(self.K, p, n, "K"))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    @property
    def m(self) -> int:
        return self.C.shape[0]

    @property
    def A_closed(self) -> np.ndarray:
        """Closed-loop transition matrix A - BK."""
        return self.A - self.B @ self.K


@dataclass(frozen=True)
class ValidatedSystem(LinearSystem):
    """A LinearSystem that passed validate_system; construct via that function."""


def _check_spd(M: np.ndarray, name: str) -> None:
    if not np.allclose(M, M.T, atol=1e-12, rtol=0.0):
        raise NotPositiveDefinite(name, float("nan"))
    min_eig = float(np.linalg.eigvalsh(M).min())
    if min_eig <= PD_MIN_EIG:
        raise NotPositiveDefinite(name, min_eig)


def _rank(M: np.ndarray) -> int:
    sv = np.linalg.svd(M, compute_uv=False)
    if sv.size == 0:
        return 0
    return int(np.sum(sv > RANK_SV_RTOL * sv[0]))


def validate_system(sys: LinearSystem) -> ValidatedSystem:
    """Check PD noise, controllability, and observability; return a tagged copy.

    Raises NotPositiveDefinite / NotControllable / NotObservable accordingly.
    Dimension consistency is already enforced by the LinearSystem constructor.
    """
    _check_spd(sys.Q, "Q")
    _check_spd(sys.R, "R")
    n = sys.n
    ctrl_blocks = [sys.B]
    obs_blocks = [sys.C]
    power = np.eye(n)
    for _ in range(n - 1):
        power = power @ sys.A
        ctrl_blocks.append(power @ sys.B)
        obs_blocks.append(sys.C @ power)
    if _rank(np.hstack(ctrl_blocks)) < n:
        raise NotControllable("(A, B) controllability matrix is rank deficient")
    if _rank(np.vstack(obs_blocks)) < n:
        raise NotObservable("(A, C) observability matrix is rank deficient")
    return ValidatedSystem(sys.A, sys.B, sys.C, sys.Q, sys.R, sys.K)


@dataclass(frozen=True)
class ScalarBounds:
    """The ten spectral scalars the covariance bound recursion runs on.

    a_lo^2 I <= A A^T <= a_hi^2 I, and analogously for k ((A-BK)(A-BK)^T),
    c (C C^T), q (Q), r (R).  c_lo, q_lo, r_lo are strictly positive; a_lo
    and k_lo may be zero since they only appear in numerator-safe positions.
    """

    a_lo: float
    a_hi: float
    k_lo: float
    k_hi: float
    c_lo: float
    c_hi: float
    q_lo: float
    q_hi: float
    r_lo: float
    r_hi: float

    def __post_init__(self):
        for lo_name, hi_name in (("a_lo", "a_hi"), ("k_lo", "k_hi"),
                                 ("c_lo", "c_hi"), ("q_lo", "q_hi"),
                                 ("r_lo", "r_hi")):
            lo, hi = getattr(self, lo_name), getattr(self, hi_name)
            if not (0.0 <= lo <= hi):
                raise ValueError(f"require 0 <= {lo_name} <= {hi_name}, got {lo}, {hi}")
        for name in ("c_lo", "q_lo", "r_lo"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")


def _spectral_range(M: np.ndarray) -> tuple[float, float]:
    eigs = np.linalg.eigvalsh(M @ M.T)
    lo = float(max(eigs[0], 0.0))
    return float(np.sqrt(lo)), float(np.sqrt(float(eigs[-1])))


def derive_scalar_bounds(sys: ValidatedSystem) -> ScalarBounds:
    """Extract the ten scalar bounds from a validated system.

    Raises DegenerateObservation when C C^T is singular: the bound
    recursion's denominators require c_lo > 0.
    """
    a_lo, a_hi = _spectral_range(sys.A)
    k_lo, k_hi = _spectral_range(sys.A_closed)
    cct_eigs = np.linalg.eigvalsh(sys.C @ sys.C.T)
    if float(cct_eigs[0]) <= 0.0:
        raise DegenerateObservation(
            f"min eigenvalue of C C^T is {float(cct_eigs[0]):.3e}; "
            "a strictly positive c_lo is required"
        )
    c_lo, c_hi = float(np.sqrt(cct_eigs[0])), float(np.sqrt(cct_eigs[-1]))
    q_eigs = np.linalg.eigvalsh(sys.Q)
    r_eigs = np.linalg.eigvalsh(sys.R)
    if a_lo == 0.0:
        warnings.warn("A is singular (a_lo = 0); bound recursion remains valid",
                      stacklevel=2)
    return ScalarBounds(
        a_lo=a_lo, a_hi=a_hi, k_lo=k_lo, k_hi=k_hi, c_lo=c_lo, c_hi=c_hi,
        q_lo=float(q_eigs[0]), q_hi=float(q_eigs[-1]),
        r_lo=float(r_eigs[0]), r_hi=float(r_eigs[-1]),
    )
