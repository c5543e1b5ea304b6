"""Forward physical model for two-photon interference in a lossy interferometer.

Covers the lossy transfer matrix M = T'·U·T, the integrated central/side peak
areas of the cross-correlation histogram, the visibility observable (central
to mean-side area ratio), the full integrated correlation-function scalars for
an imperfect pulsed source, and the beam-splitter indistinguishability
formula used to calibrate the source.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateSplitterError,
    DimensionMismatchError,
    InvalidDimensionError,
    UndefinedVisibilityError,
)
from .matrices import as_matrix

DENOMINATOR_FLOOR = 1e-12


@dataclass
class LossModel:
    """Per-mode amplitude transmissions, before (t_in) and after (t_out) the mesh."""

    t_in: np.ndarray
    t_out: np.ndarray

    def __post_init__(self):
        self.t_in = np.asarray(self.t_in, dtype=float)
        self.t_out = np.asarray(self.t_out, dtype=float)
        for name, t in (("t_in", self.t_in), ("t_out", self.t_out)):
            if t.ndim != 1:
                raise InvalidDimensionError(f"{name} must be a vector")
            if np.any(t <= 0.0) or np.any(t > 1.0):
                raise InvalidDimensionError(f"{name} entries must lie in (0, 1]")
        if self.t_in.shape != self.t_out.shape:
            raise DimensionMismatchError("t_in and t_out must have equal length")

    @property
    def dim(self) -> int:
        return self.t_in.shape[0]


@dataclass
class SourceModel:
    """Scalar summary of the pulsed photon source.

    indistinguishability: integrated squared wave-packet overlap, in [0,1].
    g2_0: integrated multiphoton correlation at zero delay.
    c1, c2: integrated first/second-order photon-number coherences.
    b0: integrated single-photon-interference term (complex; 0 for resonant
        pi-pulse pumping).
    p_emit: single-photon emission probability per pulse.
    """

    indistinguishability: float
    g2_0: float = 0.0
    c1: float = 0.0
    c2: float = 0.0
    b0: complex = 0j
    p_emit: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.indistinguishability <= 1.0:
            raise ValueError(f"indistinguishability must be in [0,1], got {self.indistinguishability}")
        if self.g2_0 < 0.0 or self.c1 < 0.0 or self.c2 < 0.0:
            raise ValueError("g2_0, c1, c2 must be nonnegative")
        if not 0.0 < self.p_emit <= 1.0:
            raise ValueError(f"p_emit must be in (0,1], got {self.p_emit}")

    @property
    def is_ideal(self) -> bool:
        return self.g2_0 == 0.0 and self.c1 == 0.0 and self.c2 == 0.0 and self.b0 == 0j


@dataclass(frozen=True)
class ModeQuad:
    """Input pair (i,j) and output pair (k,l), 1-based mode labels.

    Pairs are stored sorted; the observables are invariant under swapping
    either pair.
    """

    i: int
    j: int
    k: int
    l: int

    def __post_init__(self):
        if self.i == self.j or self.k == self.l:
            raise InvalidDimensionError(f"mode pairs must be distinct: {self}")
        if min(self.i, self.j, self.k, self.l) < 1:
            raise InvalidDimensionError(f"mode labels are 1-based: {self}")
        if self.i > self.j:
            lo, hi = self.j, self.i
            object.__setattr__(self, "i", lo)
            object.__setattr__(self, "j", hi)
        if self.k > self.l:
            lo, hi = self.l, self.k
            object.__setattr__(self, "k", lo)
            object.__setattr__(self, "l", hi)

    def key(self) -> tuple[int, int, int, int]:
        return (self.i, self.j, self.k, self.l)

    def check_dim(self, dim: int):
        if max(self.i, self.j, self.k, self.l) > dim:
            raise InvalidDimensionError(f"{self} out of range for dim {dim}")


def apply_losses(u, loss: LossModel) -> np.ndarray:
    """M = T'·U·T: row scaling by t_out, column scaling by t_in."""
    u = as_matrix(u)
    if u.shape[0] != loss.dim:
        raise DimensionMismatchError(f"matrix dim {u.shape[0]} vs loss dim {loss.dim}")
    return loss.t_out[:, None] * u * loss.t_in[None, :]


def power_matrix(m) -> np.ndarray:
    """Elementwise |M|², the single-photon transfer probabilities."""
    return np.abs(as_matrix(m)) ** 2


def submatrix(m, quad: ModeQuad) -> np.ndarray:
    """2x2 block [[M_ki, M_kj], [M_li, M_lj]] for the quad's modes."""
    m = as_matrix(m)
    quad.check_dim(m.shape[0])
    rows = [quad.k - 1, quad.l - 1]
    cols = [quad.i - 1, quad.j - 1]
    return m[np.ix_(rows, cols)]


def per2(mp) -> complex:
    return mp[0, 0] * mp[1, 1] + mp[0, 1] * mp[1, 0]


def det2(mp) -> complex:
    return mp[0, 0] * mp[1, 1] - mp[0, 1] * mp[1, 0]


def peak_areas(mp, indist: float) -> tuple[float, float]:
    """Integrated central (A0) and side (Ak) peak areas for a 2x2 block.

    A0 mixes the permanent and determinant amplitudes by the photon
    indistinguishability; Ak sums the incoherent cross-period contributions.
    """
    if not 0.0 <= indist <= 1.0:
        raise ValueError(f"indistinguishability must be in [0,1], got {indist}")
    mp = np.asarray(mp, dtype=complex)
    a0 = 0.5 * (1.0 + indist) * abs(per2(mp)) ** 2 + 0.5 * (1.0 - indist) * abs(det2(mp)) ** 2
    p = np.abs(mp) ** 2
    ak = p[0, 0] * p[1, 0] + p[0, 1] * p[1, 1] + p[0, 0] * p[1, 1] + p[0, 1] * p[1, 0]
    return float(a0), float(ak)


def visibility(u, x_ij: float, indist: float, quad: ModeQuad,
               den_floor: float = DENOMINATOR_FLOOR) -> float:
    """Central-to-mean-side peak area ratio for a unitary and input-loss ratio.

    x_ij = |t_i/t_j|² is the only loss dependence; output losses cancel.
    Raises UndefinedVisibilityError when the side-peak denominator vanishes
    (no side coincidences; the record must be excluded).
    """
    if x_ij <= 0.0:
        raise ValueError(f"x_ij must be positive, got {x_ij}")
    if not 0.0 <= indist <= 1.0:
        raise ValueError(f"indistinguishability must be in [0,1], got {indist}")
    up = submatrix(u, quad)
    num = 0.5 * (1.0 + indist) * abs(per2(up)) ** 2 + 0.5 * (1.0 - indist) * abs(det2(up)) ** 2
    p = np.abs(up) ** 2
    den = (p[0, 0] * p[1, 1] + p[0, 1] * p[1, 0]
           + x_ij * p[0, 0] * p[1, 0] + (1.0 / x_ij) * p[0, 1] * p[1, 1])
    if den < den_floor:
        raise UndefinedVisibilityError(
            f"side-peak denominator {den:.3e} below floor for quad {quad}"
        )
    return float(num / den)


def g2_central(mp, src: SourceModel) -> float:
    """Integrated, singles-normalized central-peak correlation for a 2x2 block."""
    mp = np.asarray(mp, dtype=complex)
    a, b = mp[0, 0], mp[0, 1]
    c, d = mp[1, 0], mp[1, 1]
    pa, pb, pc, pd = (abs(z) ** 2 for z in (a, b, c, d))
    val = (pa * pd + pb * pc) + (pa * pc + pb * pd) * src.g2_0
    val += 2.0 * np.real(np.conj(a) * np.conj(d) * b * c) * src.indistinguishability
    val += 2.0 * np.real(np.conj(b) * np.conj(d) * a * c) * src.c2
    val += 2.0 * np.real((a * d + b * c) * np.conj(c * a + d * b) * src.b0)
    return float(val)


def g2_side(mp, c1: float) -> float:
    """Integrated, singles-normalized side-peak correlation (factored form)."""
    if c1 < 0.0:
        raise ValueError(f"c1 must be nonnegative, got {c1}")
    mp = np.asarray(mp, dtype=complex)
    a, b = mp[0, 0], mp[0, 1]
    c, d = mp[1, 0], mp[1, 1]
    left = abs(a) ** 2 + abs(b) ** 2 + 2.0 * np.real(np.conj(a) * b) * c1
    right = abs(c) ** 2 + abs(d) ** 2 + 2.0 * np.real(np.conj(c) * d) * c1
    return float(left * right)


def reduction_check(mp, src: SourceModel) -> tuple[float, float]:
    """(g2_central/g2_side, lossless-form visibility on the same block).

    For an ideal source (g2_0 = c1 = c2 = 0, b0 = 0) the two coincide: the
    correlation-function ratio reduces to the peak-area visibility with all
    losses absorbed into the block entries.
    """
    if not src.is_ideal:
        raise ValueError("reduction check requires g2_0 = c1 = c2 = 0 and b0 = 0")
    mp = np.asarray(mp, dtype=complex)
    ratio = g2_central(mp, src) / g2_side(mp, 0.0)
    a0, ak = peak_areas(mp, src.indistinguishability)
    return float(ratio), float(a0 / ak)


@dataclass
class HomResult:
    """Indistinguishability inferred from a HOM-dip visibility.

    `value` is clamped to [0,1]; `raw` keeps the uncorrected number and
    `clamped` marks whether clamping occurred.
    """

    value: float
    raw: float
    clamped: bool


def hom_indistinguishability(v: float, r: float, t: float, r_eta: float,
                             g2_0: float = 0.0) -> HomResult:
    """Source indistinguishability from a HOM measurement on a beam splitter.

    v is the central/side peak-area ratio, (r, t) the splitter intensity
    coefficients with r + t = 1, r_eta the ratio of the two input efficiencies
    and g2_0 the source multiphoton correlation.
    """
    if abs(r + t - 1.0) > 1e-9:
        raise DegenerateSplitterError(f"R + T = {r + t} must equal 1")
    if r <= 0.0 or t <= 0.0:
        raise DegenerateSplitterError("R·T = 0: splitter passes no interference")
    if r_eta <= 0.0 or not np.isfinite(r_eta):
        raise ValueError(f"r_eta must be in (0, inf), got {r_eta}")
    if v < 0.0:
        raise ValueError(f"visibility must be nonnegative, got {v}")
    if g2_0 < 0.0:
        raise ValueError(f"g2_0 must be nonnegative, got {g2_0}")
    raw = (r * r + t * t) / (2.0 * r * t)
    raw += 0.5 * (r_eta + 1.0 / r_eta) * g2_0
    raw -= (1.0 / (2.0 * r * t) + 0.5 * (np.sqrt(r_eta) - 1.0 / np.sqrt(r_eta)) ** 2) * v
    value = min(max(raw, 0.0), 1.0)
    return HomResult(value=float(value), raw=float(raw), clamped=bool(value != raw))
