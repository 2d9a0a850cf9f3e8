"""Forecasting metrics: miss rate, minFDE, minADE and their probability-penalized variants."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DegenerateInputError, DomainError, ShapeMismatchError
from .grid import Point, ProbabilityGrid, normalize
from .sampling import DEFAULT_MISS_THRESHOLD, circle_integral

logger = logging.getLogger(__name__)

# Radius of the disk integrated around each endpoint to assign its probability
DEFAULT_PROBABILITY_RADIUS = 2.0


@dataclass(frozen=True)
class PredictionCase:
    """K predicted trajectories with probabilities and the ground truth."""

    predicted_trajectories: Tuple[Tuple[Point, ...], ...]
    probabilities: Tuple[float, ...]
    ground_truth: Tuple[Point, ...]
    case_id: str = ""

    def __post_init__(self):
        trajectories = tuple(
            tuple((float(x), float(y)) for x, y in trajectory)
            for trajectory in self.predicted_trajectories
        )
        ground_truth = tuple((float(x), float(y)) for x, y in self.ground_truth)
        probabilities = tuple(float(p) for p in self.probabilities)
        if not trajectories:
            raise DegenerateInputError(f"Case {self.case_id!r} has no predictions")
        if len(probabilities) != len(trajectories):
            raise ShapeMismatchError(
                f"Case {self.case_id!r} has {len(trajectories)} trajectories "
                f"but {len(probabilities)} probabilities"
            )
        if any(len(t) != len(ground_truth) for t in trajectories):
            raise ShapeMismatchError(
                f"Case {self.case_id!r}: every trajectory must have {len(ground_truth)} points"
            )
        if any(p < 0 for p in probabilities):
            raise DomainError(f"Case {self.case_id!r} has a negative probability")
        object.__setattr__(self, "predicted_trajectories", trajectories)
        object.__setattr__(self, "ground_truth", ground_truth)
        object.__setattr__(self, "probabilities", probabilities)

    @property
    def k(self) -> int:
        """Number of predictions."""
        return len(self.predicted_trajectories)

    def endpoints(self) -> np.ndarray:
        """Final predicted positions as a (K, 2) array."""
        return np.array([t[-1] for t in self.predicted_trajectories], dtype=np.float64)

    def normalized_probabilities(self) -> np.ndarray:
        """Probabilities rescaled to sum to 1.

        Raises:
            DegenerateInputError: If every probability is zero.
        """
        probs = np.array(self.probabilities, dtype=np.float64)
        total = probs.sum()
        if total <= 0:
            raise DegenerateInputError(f"Case {self.case_id!r} has all-zero probabilities")
        return probs / total

    def top_k(self, k: int) -> "PredictionCase":
        """Keep the k most probable predictions (stable on ties)."""
        order = np.argsort(-np.array(self.probabilities), kind="stable")[:k]
        return PredictionCase(
            predicted_trajectories=tuple(self.predicted_trajectories[i] for i in order),
            probabilities=tuple(self.probabilities[i] for i in order),
            ground_truth=self.ground_truth,
            case_id=self.case_id,
        )


@dataclass(frozen=True)
class CaseResult:
    """Metrics of a single case."""

    case_id: str
    missed: bool
    min_fde: float
    min_ade: float
    p_min_fde: float
    p_min_ade: float
    best_index: int


@dataclass(frozen=True)
class MetricsReport:
    """Metrics averaged over cases."""

    k: int
    mr_k: float
    min_fde_k: float
    min_ade_k: float
    p_min_fde_k: float
    p_min_ade_k: float
    missed: Tuple[bool, ...] = ()
    mr_stderr: Optional[float] = None
    min_fde_stderr: Optional[float] = None

    @property
    def num_cases(self) -> int:
        """Number of evaluated cases."""
        return len(self.missed)

    def to_dict(self) -> Dict[str, float]:
        """Metric values keyed by their leaderboard names."""
        k = self.k
        return {
            f"MR_{k}": self.mr_k,
            f"minFDE_{k}": self.min_fde_k,
            f"minADE_{k}": self.min_ade_k,
            f"p-minFDE_{k}": self.p_min_fde_k,
            f"p-minADE_{k}": self.p_min_ade_k,
            "num_cases": self.num_cases,
        }

    def __str__(self) -> str:
        return (
            f"MR_{self.k}={self.mr_k:.4f} minFDE_{self.k}={self.min_fde_k:.4f} "
            f"minADE_{self.k}={self.min_ade_k:.4f} over {self.num_cases} case(s)"
        )


def _endpoint_distances(preds: Sequence[Point], gt: Point) -> np.ndarray:
    preds = np.asarray(preds, dtype=np.float64).reshape(-1, 2)
    if preds.shape[0] == 0:
        raise DegenerateInputError("Prediction set is empty")
    return np.hypot(preds[:, 0] - gt[0], preds[:, 1] - gt[1])


def miss(preds: Sequence[Point], gt: Point, threshold: float = DEFAULT_MISS_THRESHOLD) -> bool:
    """True when every predicted endpoint is strictly farther than ``threshold``.

    Raises:
        DegenerateInputError: If there is no prediction.
    """
    if threshold <= 0:
        raise ConfigError(f"Miss threshold must be positive, got {threshold}")
    return bool(np.min(_endpoint_distances(preds, gt)) > threshold)


def min_fde(preds: Sequence[Point], gt: Point) -> float:
    """Smallest distance between a predicted endpoint and the ground-truth endpoint."""
    return float(np.min(_endpoint_distances(preds, gt)))


def average_displacements(trajectories: Sequence[Sequence[Point]], gt_traj: Sequence[Point]) -> np.ndarray:
    """Mean displacement of each trajectory from the ground truth.

    Raises:
        ShapeMismatchError: If a trajectory length differs from the ground truth.
    """
    gt = np.asarray(gt_traj, dtype=np.float64).reshape(-1, 2)
    if len(trajectories) == 0:
        raise DegenerateInputError("Prediction set is empty")
    errors = []
    for trajectory in trajectories:
        pred = np.asarray(trajectory, dtype=np.float64).reshape(-1, 2)
        if pred.shape != gt.shape:
            raise ShapeMismatchError(
                f"Trajectory has {pred.shape[0]} points, ground truth has {gt.shape[0]}"
            )
        errors.append(float(np.mean(np.hypot(*(pred - gt).T))))
    return np.array(errors)


def min_ade(trajectories: Sequence[Sequence[Point]], gt_traj: Sequence[Point]) -> float:
    """Smallest mean displacement over the predicted trajectories."""
    return float(np.min(average_displacements(trajectories, gt_traj)))


def p_metric(base: float, p_best: float, floor: Optional[float] = None) -> float:
    """Penalize a displacement metric by -ln of the best prediction's probability.

    Args:
        base: Displacement metric value.
        p_best: Probability of the closest prediction, in (0, 1].
        floor: Optional lower clamp applied to ``p_best``.

    Raises:
        DomainError: If the probability is zero or outside (0, 1].
    """
    if floor is not None:
        p_best = max(p_best, floor)
    if not 0 < p_best <= 1:
        raise DomainError(f"Probability must lie in (0, 1], got {p_best}")
    return base - math.log(p_best)


def assign_probabilities(
    grid: ProbabilityGrid,
    endpoints: Sequence[Point],
    radius: float = DEFAULT_PROBABILITY_RADIUS,
) -> List[float]:
    """Probability of each endpoint from the heatmap mass around it.

    The raw value of an endpoint is the normalized heatmap mass within
    ``radius``; raw values are then rescaled to sum to 1. If every raw value
    is zero the probabilities fall back to uniform.

    Raises:
        DegenerateInputError: If the grid has no mass or there are no endpoints.
    """
    if not endpoints:
        raise DegenerateInputError("No endpoints to assign probabilities to")
    raw = circle_integral(normalize(grid), endpoints, radius)
    total = float(raw.sum())
    if total <= 0:
        logger.warning("No heatmap mass near any endpoint; using uniform probabilities")
        return [1.0 / len(endpoints)] * len(endpoints)
    return [float(r) for r in raw / total]


def evaluate_case(
    case: PredictionCase,
    threshold: float = DEFAULT_MISS_THRESHOLD,
    floor: Optional[float] = None,
) -> CaseResult:
    """Compute every metric for one case with probabilities normalized to sum 1."""
    gt_end = case.ground_truth[-1]
    distances = _endpoint_distances(case.endpoints(), gt_end)
    ades = average_displacements(case.predicted_trajectories, case.ground_truth)
    probs = case.normalized_probabilities()

    best_fde = int(np.argmin(distances))
    best_ade = int(np.argmin(ades))
    fde = float(distances[best_fde])
    ade = float(ades[best_ade])
    return CaseResult(
        case_id=case.case_id,
        missed=bool(distances[best_fde] > threshold),
        min_fde=fde,
        min_ade=ade,
        p_min_fde=p_metric(fde, float(probs[best_fde]), floor),
        p_min_ade=p_metric(ade, float(probs[best_ade]), floor),
        best_index=best_fde,
    )


def evaluate_cases(
    cases: Sequence[PredictionCase],
    threshold: float = DEFAULT_MISS_THRESHOLD,
    k: Optional[int] = None,
    floor: Optional[float] = None,
) -> MetricsReport:
    """Average the per-case metrics over a dataset.

    Args:
        cases: Cases to evaluate.
        threshold: Miss distance in meters.
        k: Keep only the k most probable predictions per case; defaults to
           the largest K among the cases.
        floor: Optional probability floor for the p-metrics.
    """
    if not cases:
        raise DegenerateInputError("No cases to evaluate")
    if k is None:
        k = max(case.k for case in cases)
    results = [evaluate_case(case.top_k(k), threshold, floor) for case in cases]
    missed = tuple(r.missed for r in results)
    count = len(results)
    report = MetricsReport(
        k=k,
        mr_k=sum(missed) / count,
        min_fde_k=math.fsum(r.min_fde for r in results) / count,
        min_ade_k=math.fsum(r.min_ade for r in results) / count,
        p_min_fde_k=math.fsum(r.p_min_fde for r in results) / count,
        p_min_ade_k=math.fsum(r.p_min_ade for r in results) / count,
        missed=missed,
    )
    logger.info(str(report))
    return report
