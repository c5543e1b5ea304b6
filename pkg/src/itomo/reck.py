"""Triangular mesh parameterization of unitary matrices.

A dim-mode unitary is factored as U = D · T_K · ... · T_1 where each T_m is a
two-mode rotation

    T(theta, phi) = [[e^{i phi} cos(theta), -sin(theta)],
                     [e^{i phi} sin(theta),  cos(theta)]]

embedded on adjacent modes (n, n+1), K = dim(dim-1)/2, and D is a diagonal
phase layer. The phase vector stores (theta, phi) per mixer in a fixed
structural order, giving dim(dim-1) parameters; D is kept separate because
visibility data cannot identify diagonal phases.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidDimensionError
from .matrices import as_matrix, assert_unitary

TWO_PI = 2.0 * np.pi


def n_phases(dim: int) -> int:
    return dim * (dim - 1)


def mixer_modes(dim: int) -> list[int]:
    """0-based lower mode index of each mixer, in decomposition order.

    Rows are nulled bottom-up; within row i the mixers sweep columns
    (j, j+1) for j = 0..i-1.
    """
    order = []
    for i in range(dim - 1, 0, -1):
        order.extend(range(i))
    return order


@dataclass
class ReckParams:
    """Mesh phase vector; entries are reduced mod 2*pi on construction."""

    dim: int
    phases: np.ndarray

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidDimensionError(f"dimension must be >= 1, got {self.dim}")
        p = np.asarray(self.phases, dtype=float)
        if p.shape != (n_phases(self.dim),):
            raise InvalidDimensionError(
                f"expected {n_phases(self.dim)} phases for dim {self.dim}, got shape {p.shape}"
            )
        if not np.all(np.isfinite(p)):
            raise InvalidDimensionError("phases must be finite")
        self.phases = np.mod(p, TWO_PI)


def compose_phases(dim: int, phases) -> np.ndarray:
    """Multiply out the mesh for a raw phase vector (no mod-2pi reduction needed)."""
    p = np.asarray(phases, dtype=float)
    if p.shape != (n_phases(dim),):
        raise InvalidDimensionError(f"phase vector has shape {p.shape}, expected ({n_phases(dim)},)")
    u = np.eye(dim, dtype=complex)
    modes = mixer_modes(dim)
    # U = T_K ... T_1: right-multiply in reverse decomposition order.
    for m in range(len(modes) - 1, -1, -1):
        n = modes[m]
        theta, phi = p[2 * m], p[2 * m + 1]
        ct, st = np.cos(theta), np.sin(theta)
        eip = np.exp(1j * phi)
        col_a = u[:, n].copy()
        col_b = u[:, n + 1]
        u[:, n] = eip * (ct * col_a + st * col_b)
        u[:, n + 1] = -st * col_a + ct * col_b
    return u


def reck_compose(params: ReckParams) -> np.ndarray:
    return compose_phases(params.dim, params.phases)


def reck_decompose(u, tol: float = 1e-8) -> tuple[ReckParams, np.ndarray]:
    """Factor a unitary into mesh phases plus a residual diagonal phase layer.

    Returns (params, ext) with diag(exp(1j*ext)) @ reck_compose(params) == u
    to machine precision.
    """
    u = assert_unitary(as_matrix(u), tol=tol)
    dim = u.shape[0]
    v = u.astype(complex).copy()
    thetas = []
    phis = []
    for i in range(dim - 1, 0, -1):
        for j in range(i):
            a = v[i, j]
            b = v[i, j + 1]
            theta = np.arctan2(abs(a), abs(b))
            phi = float(np.angle(a) - np.angle(b)) if abs(a) > 0.0 else 0.0
            ct, st = np.cos(theta), np.sin(theta)
            emip = np.exp(-1j * phi)
            # Right-multiply by T†: nulls v[i, j].
            col_a = v[:, j].copy()
            col_b = v[:, j + 1]
            v[:, j] = emip * ct * col_a - st * col_b
            v[:, j + 1] = emip * st * col_a + ct * col_b
            thetas.append(theta)
            phis.append(phi)
    ext = np.angle(np.diagonal(v))
    phases = np.empty(n_phases(dim))
    phases[0::2] = thetas
    phases[1::2] = phis
    return ReckParams(dim, phases), ext


def apply_external_phases(u, ext) -> np.ndarray:
    return np.exp(1j * np.asarray(ext, dtype=float))[:, None] * as_matrix(u)
