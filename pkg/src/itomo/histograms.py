"""Cross-correlation histogram ingestion: peak integration into a visibility."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidDimensionError, InvalidWindowError, UndefinedVisibilityError


@dataclass
class Histogram:
    """Binned coincidence histogram around delay zero.

    bin_width and pump_period are in the same time units; t0_offset is the
    time of the delay-zero bin center measured from the start of the first
    bin. Counts must span at least three pump periods.
    """

    bin_width: float
    counts: np.ndarray
    t0_offset: float
    pump_period: float

    def __post_init__(self):
        if not 0.0 < self.bin_width < self.pump_period:
            raise InvalidDimensionError("need pump_period > bin_width > 0")
        self.counts = np.asarray(self.counts)
        if self.counts.ndim != 1:
            raise InvalidDimensionError("counts must be a vector")
        if np.any(self.counts < 0) or not np.all(np.isfinite(self.counts)):
            raise InvalidDimensionError("counts must be nonnegative and finite")
        if np.any(self.counts != np.round(self.counts)):
            raise InvalidDimensionError("counts must be integers")
        min_len = 3.0 * self.pump_period / self.bin_width
        if self.counts.shape[0] < min_len:
            raise InvalidDimensionError(
                f"histogram has {self.counts.shape[0]} bins, needs at least {int(np.ceil(min_len))}"
            )


def _window_sum(h: Histogram, center: float, half_width: float) -> float:
    """Sum of counts over bins whose centers fall in [center - hw, center + hw)."""
    n = h.counts.shape[0]
    centers = (np.arange(n) + 0.5) * h.bin_width
    lo = center - half_width
    hi = center + half_width
    if lo < 0.0 or hi > n * h.bin_width:
        raise InvalidWindowError(
            f"integration window [{lo:.3g}, {hi:.3g}) outside the histogram span"
        )
    mask = (centers >= lo) & (centers < hi)
    return float(h.counts[mask].sum())


def ingest_histogram(
    h: Histogram, window_fraction: float = 0.4, n_side_peaks: int = 5
) -> tuple[float, float]:
    """Integrate the central and side peaks into (V, sigma_V).

    A0 sums counts within +/- window_fraction * pump_period of delay zero;
    the side estimate averages the same windows centered at +/- k periods for
    k = 1..n_side_peaks. sigma_V propagates Poisson errors of both.
    """
    if not 0.0 < window_fraction <= 0.5:
        raise InvalidWindowError(f"window_fraction must be in (0, 0.5], got {window_fraction}")
    if n_side_peaks < 2:
        raise InvalidWindowError(f"need at least 2 side peaks, got {n_side_peaks}")
    half = window_fraction * h.pump_period
    a0 = _window_sum(h, h.t0_offset, half)
    side_sums = []
    for k in range(1, n_side_peaks + 1):
        for s in (-1.0, 1.0):
            side_sums.append(_window_sum(h, h.t0_offset + s * k * h.pump_period, half))
    side = np.array(side_sums)
    mean_side = float(side.mean())
    if mean_side <= 0.0:
        raise UndefinedVisibilityError("all side-peak windows are empty")
    v = a0 / mean_side
    # Poisson: var(A0) = A0, var(mean side) = sum(side)/n².
    var_mean_side = float(side.sum()) / side.size ** 2
    sigma_v = np.sqrt(a0 / mean_side ** 2 + (a0 ** 2 / mean_side ** 4) * var_mean_side)
    return float(v), float(sigma_v)
