"""Complex transfer-matrix primitives.

A transfer matrix is represented as a plain square complex ndarray; the
functions here cover Haar-random sampling, the fidelity distance, and the
phase gauges (canonical form and conjugate-branch resolution) under which
reconstructed matrices are compared.
"""
from __future__ import annotations

import numpy as np

from .errors import (
    CannotCanonicalizeError,
    DimensionMismatchError,
    InvalidDimensionError,
    NotUnitaryError,
    UndefinedFidelityError,
)

UNITARITY_TOL = 1e-10


def as_matrix(m) -> np.ndarray:
    """Coerce to a square complex matrix with finite entries."""
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidDimensionError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] < 1:
        raise InvalidDimensionError("matrix dimension must be at least 1")
    if not np.all(np.isfinite(a.view(float))):
        raise InvalidDimensionError("matrix entries must be finite")
    return a


def unitarity_defect(u) -> float:
    """max |(U†U - I)_ab|, the deviation from unitarity."""
    u = as_matrix(u)
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))


def assert_unitary(u, tol: float = UNITARITY_TOL) -> np.ndarray:
    u = as_matrix(u)
    defect = unitarity_defect(u)
    if defect > tol:
        raise NotUnitaryError(f"unitarity defect {defect:.3e} exceeds tolerance {tol:.1e}")
    return u


def haar_random_unitary(dim: int, seed: int) -> np.ndarray:
    """Haar-distributed random unitary, deterministic given the seed.

    Uses the QR construction on a complex Ginibre matrix with the diagonal of
    R phase-fixed so the distribution is exactly Haar.
    """
    if dim < 1:
        raise InvalidDimensionError(f"dimension must be >= 1, got {dim}")
    rng = np.random.default_rng(seed)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    q = q * (d / np.abs(d))
    return q


def matrix_fidelity(a, b) -> float:
    """|Tr(A†B)|² / (Tr(A†A)·Tr(B†B)); symmetric, global-phase invariant, in [0,1]."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shape mismatch {a.shape} vs {b.shape}")
    na = float(np.sum(np.abs(a) ** 2))
    nb = float(np.sum(np.abs(b) ** 2))
    if na == 0.0 or nb == 0.0:
        raise UndefinedFidelityError("fidelity undefined for a zero matrix")
    f = abs(np.sum(a.conj() * b)) ** 2 / (na * nb)
    if f > 1.0 + 1e-9:
        raise UndefinedFidelityError(f"fidelity {f} above 1 beyond roundoff; inputs corrupt")
    return float(min(max(f, 0.0), 1.0))


def canonicalize_phases(u, row: int | None = None, col: int | None = None) -> np.ndarray:
    """Fix the diagonal phase gauge D1·U·D2 so one row and one column are real >= 0.

    `row` and `col` are 1-based mode labels; defaults are the last row and the
    second column (first column for 1x1). Entry moduli are preserved exactly.
    Raises CannotCanonicalizeError if the chosen row or column contains a
    (numerically) zero entry, in which case the caller should pick another.
    """
    u = as_matrix(u)
    n = u.shape[0]
    r = n if row is None else row
    c = (2 if n >= 2 else 1) if col is None else col
    if not (1 <= r <= n and 1 <= c <= n):
        raise InvalidDimensionError(f"row/col ({r},{c}) out of range for dim {n}")
    r -= 1
    c -= 1
    eps = 1e-14 * float(np.max(np.abs(u)))
    if np.any(np.abs(u[r, :]) <= eps) or np.any(np.abs(u[:, c]) <= eps):
        raise CannotCanonicalizeError(
            f"zero entry in row {r + 1} or column {c + 1}; pick another row/column"
        )
    d2 = np.exp(-1j * np.angle(u[r, :]))
    v = u * d2[None, :]
    d1 = np.exp(-1j * np.angle(v[:, c]))
    v = v * d1[:, None]
    # Snap the gauge row/column to exact nonnegative reals (their moduli), so
    # canonicalization is a bitwise fixed point.
    v[r, :] = np.abs(v[r, :])
    v[:, c] = np.abs(v[:, c])
    return v


def resolve_conjugate_ambiguity(
    u, reference=None, imag_tol: float = 1e-9
) -> np.ndarray:
    """Pick between U and U*, which produce identical visibility data.

    With a reference, return whichever branch has the higher fidelity to it.
    Without one, fix the sign convention: the first entry (row-major) whose
    imaginary part exceeds `imag_tol` in magnitude is made to have a positive
    imaginary part. Real matrices are returned unchanged.
    """
    u = as_matrix(u)
    if reference is not None:
        reference = as_matrix(reference)
        if matrix_fidelity(np.conj(u), reference) > matrix_fidelity(u, reference):
            return np.conj(u)
        return u
    for val in u.flat:
        if abs(val.imag) > imag_tol:
            return np.conj(u) if val.imag < 0 else u
    return u


def matrix_to_dict(m) -> dict:
    """JSON-ready form {"dim": n, "re": [[...]], "im": [[...]]}; exact at double precision."""
    m = as_matrix(m)
    return {
        "dim": int(m.shape[0]),
        "re": m.real.tolist(),
        "im": m.imag.tolist(),
    }


def matrix_from_dict(d: dict) -> np.ndarray:
    try:
        dim = int(d["dim"])
        re = np.asarray(d["re"], dtype=float)
        im = np.asarray(d["im"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidDimensionError(f"malformed matrix object: {exc}") from exc
    if re.shape != (dim, dim) or im.shape != (dim, dim):
        raise InvalidDimensionError(
            f"matrix arrays have shape {re.shape}/{im.shape}, expected ({dim},{dim})"
        )
    return as_matrix(re + 1j * im)
