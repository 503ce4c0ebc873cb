"""Speed-density aggregation, curve fitting, and the fundamental diagram.

Per-frame (density, speed) samples are grouped into fixed-width density bins,
a speed-density model is fitted to the bin means by count-weighted least
squares, and flux q = k * v(k) is maximized over the observed density range
to locate the critical density.

Two fit models are available: ``greenshields`` (speed linear in density,
v = vf * (1 - k/kj), giving a parabolic flux curve) and ``quadratic``
(v = a + b*k + c*k^2). Density may be expressed per kilometre or as a raw
vehicle count; the math is unit-agnostic, only labels change.
"""

import math
from dataclasses import dataclass

import numpy as np

from .stats import FrameStats

MODELS = ("greenshields", "quadratic")
AXIS_MODES = ("density", "count")
# Default bin width per axis mode: 5 veh/km, or 1 vehicle in raw-count mode.
_DEFAULT_BIN_WIDTH = {"density": 5.0, "count": 1.0}
# Relative slope magnitude below which greenshields data is considered flat.
_FLAT_SLOPE_EPS = 1e-12


class FitError(ValueError):
    """Raised when the binned data cannot support the requested fit."""


@dataclass(frozen=True, slots=True)
class FdSample:
    """One frame's (density, mean speed) observation."""

    density: float
    speed: float
    frame: int

    def __post_init__(self) -> None:
        if not (self.density >= 0 and self.speed >= 0):
            raise ValueError(
                f"density and speed must be non-negative, got ({self.density}, {self.speed})"
            )


@dataclass(frozen=True, slots=True)
class FdBin:
    """Aggregated samples of one density bin; density is the bin center."""

    density: float
    mean_speed: float
    count: int
    flux: float


@dataclass(frozen=True, slots=True)
class SpeedDensityFit:
    """Fitted speed-density relationship.

    ``coefficients`` is (vf, kj) for greenshields and (a, b, c) for the
    quadratic model. A flat or rising greenshields fit has no finite jam
    density; kj is then +inf and ``unbounded`` is set.
    """

    model: str
    coefficients: tuple[float, ...]
    residual_norm: float
    unbounded: bool = False

    def speed_at(self, density: float) -> float:
        """Fitted speed, clamped at zero where the model goes negative."""

        if self.model == "greenshields":
            vf, kj = self.coefficients
            value = vf if math.isinf(kj) else vf * (1.0 - density / kj)
        else:
            a, b, c = self.coefficients
            value = a + b * density + c * density * density
        return max(value, 0.0)


@dataclass(frozen=True, slots=True)
class FdCurve:
    """Binned flux points plus the fitted curve's critical-density summary.

    ``critical_range`` brackets the densities where fitted flux stays within
    95% of its maximum. ``interior_maximum`` is False when the flux argmax
    sits on the edge of the observed density range (monotone flux), in which
    case the critical density is only a lower/upper bound.
    """

    bins: tuple[FdBin, ...]
    fit: SpeedDensityFit
    critical_density: float
    max_flux: float
    critical_range: tuple[float, float]
    interior_maximum: bool


def default_bin_width(axis_mode: str) -> float:
    if axis_mode not in AXIS_MODES:
        raise ValueError(f"axis_mode must be one of {AXIS_MODES}, got {axis_mode!r}")
    return _DEFAULT_BIN_WIDTH[axis_mode]


@dataclass(frozen=True, slots=True)
class FdSettings:
    """User-facing knobs; ``bin_width`` None picks the axis-mode default."""

    bin_width: float | None = None
    min_bin_count: int = 5
    model: str = "quadratic"
    axis_mode: str = "density"

    def __post_init__(self) -> None:
        if self.model not in MODELS:
            raise ValueError(f"fd.model must be one of {MODELS}, got {self.model!r}")
        if self.axis_mode not in AXIS_MODES:
            raise ValueError(f"fd.axis_mode must be one of {AXIS_MODES}, got {self.axis_mode!r}")
        if self.bin_width is not None and not self.bin_width > 0:
            raise ValueError(f"fd.bin_width must be positive, got {self.bin_width}")
        if self.min_bin_count < 1:
            raise ValueError(f"fd.min_bin_count must be >= 1, got {self.min_bin_count}")

    def effective_bin_width(self) -> float:
        return self.bin_width if self.bin_width is not None else default_bin_width(self.axis_mode)


def samples_from_stats(stats: list[FrameStats], axis_mode: str = "density") -> list[FdSample]:
    """Lift per-frame statistics into FD samples; frames without a mean
    speed (no moving tracks yet) carry no information and are skipped."""

    if axis_mode not in AXIS_MODES:
        raise ValueError(f"axis_mode must be one of {AXIS_MODES}, got {axis_mode!r}")
    out = []
    for s in stats:
        if s.mean_speed_kmh is None:
            continue
        density = s.density_veh_per_km if axis_mode == "density" else float(s.vehicle_count)
        out.append(FdSample(density=density, speed=max(s.mean_speed_kmh, 0.0), frame=s.frame))
    return out


def bin_samples(samples: list[FdSample], bin_width: float, min_bin_count: int) -> list[FdBin]:
    """Group samples into fixed-width density bins and average their speeds.

    Bins holding fewer than ``min_bin_count`` samples are dropped. Returned
    bins are sorted by density and report the bin center.
    """

    if not bin_width > 0:
        raise ValueError(f"bin_width must be positive, got {bin_width}")
    if min_bin_count < 1:
        raise ValueError(f"min_bin_count must be >= 1, got {min_bin_count}")

    groups: dict[int, list[float]] = {}
    for s in samples:
        groups.setdefault(math.floor(s.density / bin_width), []).append(s.speed)

    bins = []
    for index in sorted(groups):
        speeds = groups[index]
        if len(speeds) < min_bin_count:
            continue
        center = (index + 0.5) * bin_width
        mean_speed = math.fsum(speeds) / len(speeds)
        bins.append(
            FdBin(density=center, mean_speed=mean_speed, count=len(speeds), flux=center * mean_speed)
        )
    return bins


def fit_speed_density(bins: list[FdBin], model: str) -> SpeedDensityFit:
    """Count-weighted least-squares fit of the bin means.

    greenshields fits v = vf - (vf/kj) * k and reports (vf, kj); a
    non-negative slope means the data never decays and kj is unbounded.
    quadratic fits v = a + b*k + c*k^2 and reports (a, b, c).
    """

    if model not in MODELS:
        raise ValueError(f"model must be one of {MODELS}, got {model!r}")
    needed = 2 if model == "greenshields" else 3
    if len(bins) < needed:
        raise FitError(f"{model} fit needs at least {needed} bins, got {len(bins)}")
    distinct = len({b.density for b in bins})
    if distinct < needed:
        raise FitError(
            f"{model} fit needs samples at {needed} distinct densities, got {distinct}"
        )

    k = np.array([b.density for b in bins])
    v = np.array([b.mean_speed for b in bins])
    weights = np.sqrt([b.count for b in bins])

    if model == "greenshields":
        slope, intercept = np.polyfit(k, v, 1, w=weights)
        vf = float(intercept)
        if slope < -_FLAT_SLOPE_EPS * max(1.0, abs(vf)):
            kj = -vf / float(slope)
            unbounded = False
        else:
            kj = math.inf
            unbounded = True
        coefficients = (vf, kj)
        predicted = intercept + slope * k
    else:
        c2, c1, c0 = np.polyfit(k, v, 2, w=weights)
        coefficients = (float(c0), float(c1), float(c2))
        predicted = c0 + c1 * k + c2 * k * k

    counts = np.array([b.count for b in bins], dtype=float)
    residual_norm = float(np.sqrt(np.sum(counts * (v - predicted) ** 2)))
    return SpeedDensityFit(
        model=model,
        coefficients=coefficients,
        residual_norm=residual_norm,
        unbounded=unbounded if model == "greenshields" else False,
    )


def fundamental_diagram(bins: list[FdBin], fit: SpeedDensityFit, bin_width: float) -> FdCurve:
    """Locate the critical density of the fitted flux curve q(k) = k * v(k).

    The search is a grid argmax over the observed density range at one tenth
    of the bin width; ties go to the lowest density. The 95%-of-max band is
    reported alongside so a broad plateau is distinguishable from a peak.
    """

    if not bins:
        raise ValueError("fundamental_diagram needs at least one bin")
    if not bin_width > 0:
        raise ValueError(f"bin_width must be positive, got {bin_width}")

    lo = bins[0].density
    hi = bins[-1].density
    step = bin_width / 10.0
    grid = np.arange(lo, hi + step / 2.0, step) if hi > lo else np.array([lo])
    flux = np.array([k * fit.speed_at(float(k)) for k in grid])

    peak = int(np.argmax(flux))
    critical_density = float(grid[peak])
    max_flux = float(flux[peak])
    interior = 0 < peak < len(grid) - 1

    near = grid[flux >= 0.95 * max_flux] if max_flux > 0 else grid[peak : peak + 1]
    critical_range = (float(near.min()), float(near.max()))

    return FdCurve(
        bins=tuple(bins),
        fit=fit,
        critical_density=critical_density,
        max_flux=max_flux,
        critical_range=critical_range,
        interior_maximum=interior,
    )
