"""Synthetic multimodal futures built from Gaussian mixtures.

Mixtures stand in for a trained model's heatmap: they render to grids,
provide ground truths to draw from, and drive the FDE/MR trade-off sweep.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, OutOfBoundsError
from .grid import GridSpec, Point, ProbabilityGrid
from .sampling import SAMPLER_MODES, SampleSet, SamplerConfig, iterate_fde, sample, sample_mr

logger = logging.getLogger(__name__)

DEFAULT_SUITE_SIZE = 10
DEFAULT_DRAWS = 100_000

# Synthetic suite layout (meters); modes stay 5 sigma inside a 96 px frame
SUITE_MIN_MODES = 3
SUITE_MAX_MODES = 5
SUITE_RING_RADIUS = (13.0, 15.0)
SUITE_ANGLE_JITTER = 0.15
SUITE_SHOULDER_OFFSET = 2.8
SUITE_SHOULDER_WEIGHT = (0.3, 0.4)
SUITE_SIGMA_RANGE = (0.3, 0.4)
SUITE_MODE_WEIGHT = (1.0, 1.5)

WEIGHT_TOLERANCE = 1e-9


class Component(NamedTuple):
    """One isotropic Gaussian of a mixture."""

    mean: Point
    sigma: float
    weight: float


@dataclass(frozen=True)
class GaussianMixture:
    """Isotropic Gaussian mixture over endpoint positions."""

    components: Tuple[Component, ...]
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        components = tuple(
            Component((float(mean[0]), float(mean[1])), float(sigma), float(weight))
            for mean, sigma, weight in self.components
        )
        if not components:
            raise ConfigError(f"Mixture {self.name!r} has no components")
        if any(c.sigma <= 0 or not math.isfinite(c.sigma) for c in components):
            raise ConfigError(f"Mixture {self.name!r} has a non-positive sigma")
        if any(c.weight <= 0 for c in components):
            raise ConfigError(f"Mixture {self.name!r} has a non-positive weight")
        total = math.fsum(c.weight for c in components)
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            raise ConfigError(f"Mixture {self.name!r} weights sum to {total}, expected 1")
        object.__setattr__(self, "components", components)

    @property
    def means(self) -> np.ndarray:
        """Component means as a (M, 2) array."""
        return np.array([c.mean for c in self.components], dtype=np.float64)

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([c.sigma for c in self.components], dtype=np.float64)

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components], dtype=np.float64)

    def density(self, points: np.ndarray) -> np.ndarray:
        """Mixture density at metric points of shape (..., 2)."""
        points = np.asarray(points, dtype=np.float64)
        result = np.zeros(points.shape[:-1])
        for (mx, my), sigma, weight in self.components:
            d_sq = (points[..., 0] - mx) ** 2 + (points[..., 1] - my) ** 2
            result += weight * np.exp(-d_sq / (2.0 * sigma**2)) / (2.0 * math.pi * sigma**2)
        return result


class TradeoffRow(NamedTuple):
    """Expected metrics after L FDE iterations."""

    l: int
    expected_mr: float
    expected_fde: float


@dataclass(frozen=True)
class TradeoffCurve:
    """Expected MR and FDE as a function of the number of FDE iterations."""

    rows: Tuple[TradeoffRow, ...]

    def __post_init__(self):
        rows = tuple(TradeoffRow(int(l), float(mr), float(fde)) for l, mr, fde in self.rows)
        levels = [row.l for row in rows]
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ConfigError(f"Trade-off levels must be distinct and ascending, got {levels}")
        object.__setattr__(self, "rows", rows)

    def row(self, l: int) -> TradeoffRow:
        """Row for a given iteration count."""
        for row in self.rows:
            if row.l == l:
                return row
        raise KeyError(l)


@dataclass(frozen=True)
class SamplerSummary:
    """Mean expected metrics of one sampler over a set of mixtures."""

    mode: str
    expected_mr: float
    expected_fde: float
    mr_stderr: float
    fde_stderr: float

    def __str__(self) -> str:
        return (
            f"{self.mode}: MR={self.expected_mr:.4f} (+/-{self.mr_stderr:.4f}) "
            f"FDE={self.expected_fde:.4f} (+/-{self.fde_stderr:.4f})"
        )


def mixture_to_grid(mixture: GaussianMixture, spec: GridSpec) -> ProbabilityGrid:
    """Discretize a mixture: density at each pixel center times the pixel area.

    Raises:
        OutOfBoundsError: If a component mean is outside the grid.
    """
    for component in mixture.components:
        if not spec.contains(component.mean):
            raise OutOfBoundsError(
                f"Mixture {mixture.name!r} mean {component.mean} is outside the grid {spec.bounds}"
            )
    xs, ys = spec.pixel_centers()
    values = mixture.density(np.stack([xs, ys], axis=-1)) * spec.pixel_area
    return ProbabilityGrid(spec, values)


def draw_ground_truths(mixture: GaussianMixture, draws: int, seed: int) -> np.ndarray:
    """Draw endpoints from a mixture: a component by weight, then a point from it.

    Returns:
        (draws, 2) array, identical for identical seeds.
    """
    if draws < 1:
        raise ConfigError(f"Number of draws must be at least 1, got {draws}")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(mixture.components), size=draws, p=mixture.weights)
    noise = rng.standard_normal((draws, 2))
    return mixture.means[chosen] + mixture.sigmas[chosen, None] * noise


def draw_ground_truth(mixture: GaussianMixture, seed: Optional[int] = None) -> Point:
    """Single endpoint draw; the seed defaults to the mixture's own."""
    x, y = draw_ground_truths(mixture, 1, mixture.seed if seed is None else seed)[0]
    return (float(x), float(y))


def _scenario_spec(spec: Optional[GridSpec]) -> GridSpec:
    return spec if spec is not None else GridSpec.centered()


def sweep_tradeoff(
    mixture: GaussianMixture,
    cfg: SamplerConfig,
    l_values: Sequence[int],
    draws: int,
    seed: int,
    spec: Optional[GridSpec] = None,
) -> TradeoffCurve:
    """Expected MR and FDE of FDE sampling after each number of iterations L.

    The MR picks are computed once and refined by successive FDE iterations;
    every row is scored against the same Monte-Carlo draws, so the row at
    L = 0 is exactly the MR sampling result.

    Args:
        mixture: Distribution rendered to the heatmap and drawn from.
        cfg: Sampler configuration (its ``fde_iters`` is ignored).
        l_values: Distinct non-negative iteration counts in ascending order.
        draws: Monte-Carlo draws per row.
        seed: Seed of the ground-truth draws.
        spec: Grid geometry; defaults to the centered 224 x 224 frame.
    """
    from .oracle import monte_carlo_metrics

    levels = [int(l) for l in l_values]
    if not levels or levels[0] < 0 or any(b <= a for a, b in zip(levels, levels[1:])):
        raise ConfigError(f"L values must be non-negative and strictly ascending, got {levels}")

    grid = mixture_to_grid(mixture, _scenario_spec(spec))
    init = sample_mr(grid, cfg)
    snapshots: Dict[int, SampleSet] = {0: init}
    for iteration, samples in enumerate(iterate_fde(grid, init, cfg, max_iters=levels[-1]), 1):
        snapshots[iteration] = samples

    rows = []
    for l in levels:
        report = monte_carlo_metrics(mixture, snapshots[l], draws, seed, cfg.miss_threshold)
        rows.append(TradeoffRow(l, report.mr_k, report.min_fde_k))
        logger.info(f"Sweep {mixture.name or 'mixture'} L={l}: MR={report.mr_k:.4f} FDE={report.min_fde_k:.4f}")
    return TradeoffCurve(rows=tuple(rows))


def synthetic_suite(count: int = DEFAULT_SUITE_SIZE, seed: int = 0) -> List[GaussianMixture]:
    """Seeded mixtures with 3 to 5 lane-like modes around the agent.

    Each mode is a sharp peak with an equal, lighter shoulder ahead of and
    behind it along a radial lane, like the along-track spread of a predicted
    heatmap. A shoulder sits closer than two disk radii to its peak, so one
    disk can straddle both. Modes are far enough apart that no disk or FDE
    neighborhood reaches two of them.

    Mixture i is generated from seed ``seed + i`` so suites of different
    sizes share their leading mixtures.
    """
    suite = []
    for index in range(count):
        rng = np.random.default_rng(seed + index)
        modes = int(rng.integers(SUITE_MIN_MODES, SUITE_MAX_MODES + 1))
        angles = 2.0 * np.pi * np.arange(modes) / modes + rng.uniform(
            -SUITE_ANGLE_JITTER, SUITE_ANGLE_JITTER, size=modes
        )
        radii = rng.uniform(*SUITE_RING_RADIUS, size=modes)
        sigmas = rng.uniform(*SUITE_SIGMA_RANGE, size=modes)
        shoulders = rng.uniform(*SUITE_SHOULDER_WEIGHT, size=modes)
        mode_weights = rng.uniform(*SUITE_MODE_WEIGHT, size=modes)

        raw = []
        for angle, radius, sigma, shoulder, mode_weight in zip(
            angles, radii, sigmas, shoulders, mode_weights
        ):
            direction = np.array([math.cos(angle), math.sin(angle)])
            parts = ((0.0, 1.0), (SUITE_SHOULDER_OFFSET, shoulder), (-SUITE_SHOULDER_OFFSET, shoulder))
            for offset, share in parts:
                mean = (radius + offset) * direction
                raw.append(((float(mean[0]), float(mean[1])), float(sigma), float(mode_weight * share)))
        total = math.fsum(weight for _, _, weight in raw)
        components = tuple(Component(mean, sigma, weight / total) for mean, sigma, weight in raw)
        suite.append(GaussianMixture(components=components, seed=seed + index, name=f"suite-{index}"))
        logger.debug(f"Suite mixture {index}: {modes} modes")
    return suite


def compare_samplers(
    mixtures: Iterable[GaussianMixture],
    cfg: SamplerConfig,
    draws: int,
    seed: int,
    spec: Optional[GridSpec] = None,
    modes: Sequence[str] = SAMPLER_MODES,
) -> Dict[str, SamplerSummary]:
    """Mean expected MR and FDE of each sampler over a set of mixtures.

    Every sampler sees the same heatmap and the same ground-truth draws for
    a given mixture.
    """
    from .oracle import monte_carlo_metrics

    spec = _scenario_spec(spec)
    mixtures = list(mixtures)
    if not mixtures:
        raise ConfigError("Need at least one mixture to compare samplers")
    results: Dict[str, List] = {mode: [] for mode in modes}
    for mixture in mixtures:
        grid = mixture_to_grid(mixture, spec)
        for mode in modes:
            report = monte_carlo_metrics(
                mixture, sample(grid, cfg, mode), draws, seed, cfg.miss_threshold
            )
            results[mode].append(report)

    summaries = {}
    count = len(mixtures)
    for mode, reports in results.items():
        summary = SamplerSummary(
            mode=mode,
            expected_mr=math.fsum(r.mr_k for r in reports) / count,
            expected_fde=math.fsum(r.min_fde_k for r in reports) / count,
            mr_stderr=math.sqrt(math.fsum(r.mr_stderr**2 for r in reports)) / count,
            fde_stderr=math.sqrt(math.fsum(r.min_fde_stderr**2 for r in reports)) / count,
        )
        logger.info(str(summary))
        summaries[mode] = summary
    return summaries
