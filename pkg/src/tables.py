"""CSV and JSON readers and writers for every file the CLI exchanges.

Row numbers in SchemaError messages are file line numbers: the header is
row 1 and the first data row is row 2. Floats are written with ``repr`` so
values read back are bit-identical to the ones written.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import sys
from collections import defaultdict
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

from .errors import HeatmapError, SchemaError
from .metrics import MetricsReport, PredictionCase
from .rasterizer import AgentTrack, Centerline, Scene
from .sampling import SampleSet
from .scenario import Component, GaussianMixture, TradeoffCurve
from .trajectory import AgentHistory

logger = logging.getLogger(__name__)

SAMPLE_COLUMNS = ("k", "x", "y", "probability", "covered_mass")
PREDICTION_COLUMNS = ("case_id", "k", "t", "x", "y", "prob")
GROUND_TRUTH_COLUMNS = ("case_id", "t", "x", "y")
TRADEOFF_COLUMNS = ("L", "expected_mr", "expected_fde")


def emit(path: Optional[Path], text: str) -> None:
    """Write text to a file, or to stdout when no path is given."""
    if path is None:
        sys.stdout.write(text)
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="")
    logger.info(f"Wrote {path}")


def _format_csv(columns: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    return buffer.getvalue()


def _read_csv(path: Path, columns: Sequence[str]) -> Iterator[Tuple[int, Dict[str, str]]]:
    """Yield (row number, record) pairs after checking the header.

    Raises:
        FileNotFoundError: If the file doesn't exist.
        SchemaError: If a required column is missing.
    """
    if not path.exists():
        raise FileNotFoundError(f"Table not found: {path}")
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        missing = [c for c in columns if c not in (reader.fieldnames or ())]
        if missing:
            raise SchemaError(f"Missing column(s) {', '.join(missing)}", path=path, row=1)
        for row_number, record in enumerate(reader, start=2):
            yield row_number, record


def _field(record: Dict[str, str], name: str, kind, path: Path, row: int):
    value = record.get(name)
    if value is None or value == "":
        raise SchemaError(f"Empty value for {name!r}", path=path, row=row)
    try:
        return kind(value)
    except ValueError as e:
        raise SchemaError(f"Invalid value {value!r} for {name!r}", path=path, row=row) from e


def format_samples(samples: SampleSet) -> str:
    """SampleSet as CSV with columns k,x,y,probability,covered_mass."""
    rows = [
        (k, x, y, p, m)
        for k, ((x, y), p, m) in enumerate(
            zip(samples.points, samples.probabilities, samples.covered_mass)
        )
    ]
    return _format_csv(SAMPLE_COLUMNS, rows)


def read_samples(path: Path) -> SampleSet:
    """Read a SampleSet CSV back, ordered by its ``k`` column."""
    entries = []
    for row, record in _read_csv(path, SAMPLE_COLUMNS):
        entries.append(
            (
                _field(record, "k", int, path, row),
                (_field(record, "x", float, path, row), _field(record, "y", float, path, row)),
                _field(record, "probability", float, path, row),
                _field(record, "covered_mass", float, path, row),
            )
        )
    if not entries:
        raise SchemaError("Sample table has no rows", path=path)
    entries.sort(key=lambda entry: entry[0])
    try:
        return SampleSet(
            points=tuple(e[1] for e in entries),
            probabilities=tuple(e[2] for e in entries),
            covered_mass=tuple(e[3] for e in entries),
        )
    except HeatmapError as e:
        raise SchemaError(str(e), path=path) from e


def read_ground_truths(path: Path) -> Dict[str, Tuple[Tuple[float, Tuple[float, float]], ...]]:
    """Ground-truth futures keyed by case, each sorted by ``t``."""
    steps: Dict[str, Dict[float, Tuple[float, float]]] = defaultdict(dict)
    for row, record in _read_csv(path, GROUND_TRUTH_COLUMNS):
        case_id = record["case_id"]
        t = _field(record, "t", float, path, row)
        if t in steps[case_id]:
            raise SchemaError(f"Duplicate step t={t} for case {case_id!r}", path=path, row=row)
        steps[case_id][t] = (_field(record, "x", float, path, row), _field(record, "y", float, path, row))
    if not steps:
        raise SchemaError("Ground-truth table has no rows", path=path)
    return {case_id: tuple(sorted(by_t.items())) for case_id, by_t in steps.items()}


def read_prediction_cases(pred_path: Path, gt_path: Path) -> List[PredictionCase]:
    """Join a prediction table and a ground-truth table into cases.

    Every prediction of a case must cover exactly the ground-truth steps and
    repeat the same ``prob`` on each of its rows. Cases come out in order of
    first appearance in the prediction table.
    """
    ground_truths = read_ground_truths(gt_path)
    steps: Dict[str, Dict[int, Dict[float, Tuple[float, float]]]] = defaultdict(lambda: defaultdict(dict))
    probs: Dict[Tuple[str, int], float] = {}
    first_row: Dict[str, int] = {}

    for row, record in _read_csv(pred_path, PREDICTION_COLUMNS):
        case_id = record["case_id"]
        k = _field(record, "k", int, pred_path, row)
        t = _field(record, "t", float, pred_path, row)
        prob = _field(record, "prob", float, pred_path, row)
        first_row.setdefault(case_id, row)
        if case_id not in ground_truths:
            raise SchemaError(f"Case {case_id!r} has no ground truth", path=pred_path, row=row)
        if probs.setdefault((case_id, k), prob) != prob:
            raise SchemaError(
                f"Prediction {k} of case {case_id!r} has inconsistent probabilities",
                path=pred_path,
                row=row,
            )
        if t in steps[case_id][k]:
            raise SchemaError(f"Duplicate step t={t} for prediction {k}", path=pred_path, row=row)
        steps[case_id][k][t] = (
            _field(record, "x", float, pred_path, row),
            _field(record, "y", float, pred_path, row),
        )
    if not steps:
        raise SchemaError("Prediction table has no rows", path=pred_path)

    cases = []
    for case_id in sorted(steps, key=first_row.__getitem__):
        gt_steps = ground_truths[case_id]
        expected = [t for t, _ in gt_steps]
        trajectories = []
        for k in sorted(steps[case_id]):
            by_t = steps[case_id][k]
            if sorted(by_t) != expected:
                raise SchemaError(
                    f"Prediction {k} of case {case_id!r} does not match the ground-truth steps",
                    path=pred_path,
                    row=first_row[case_id],
                )
            trajectories.append(tuple(by_t[t] for t in expected))
        try:
            cases.append(
                PredictionCase(
                    predicted_trajectories=tuple(trajectories),
                    probabilities=tuple(probs[(case_id, k)] for k in sorted(steps[case_id])),
                    ground_truth=tuple(point for _, point in gt_steps),
                    case_id=case_id,
                )
            )
        except HeatmapError as e:
            raise SchemaError(str(e), path=pred_path, row=first_row[case_id]) from e
    logger.info(f"Loaded {len(cases)} case(s) from {pred_path}")
    return cases


def endpoint_cases(samples: SampleSet, gt_path: Path) -> List[PredictionCase]:
    """Evaluate one SampleSet against the final step of every ground-truth case."""
    cases = []
    for case_id, gt_steps in read_ground_truths(gt_path).items():
        cases.append(
            PredictionCase(
                predicted_trajectories=tuple((point,) for point in samples.points),
                probabilities=samples.probabilities,
                ground_truth=(gt_steps[-1][1],),
                case_id=case_id,
            )
        )
    return cases


def is_sample_table(path: Path) -> bool:
    """Check whether a CSV header is the SampleSet layout."""
    if not path.exists():
        raise FileNotFoundError(f"Table not found: {path}")
    with open(path, newline="", encoding="utf-8") as f:
        header = next(csv.reader(f), [])
    return all(column in header for column in SAMPLE_COLUMNS)


def format_tradeoff(curve: TradeoffCurve) -> str:
    """TradeoffCurve as CSV with columns L,expected_mr,expected_fde."""
    return _format_csv(TRADEOFF_COLUMNS, [tuple(row) for row in curve.rows])


def format_json(payload: Dict[str, Any]) -> str:
    """Stable JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def format_metrics(report: MetricsReport) -> str:
    """MetricsReport as JSON."""
    return format_json(report.to_dict())


def _load_json(path: Path) -> Any:
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SchemaError(f"Invalid JSON: {e.msg}", path=path, row=e.lineno) from e


def _points(value: Any, where: str, path: Path) -> Tuple[Tuple[float, float], ...]:
    try:
        return tuple((float(x), float(y)) for x, y in value)
    except (TypeError, ValueError) as e:
        raise SchemaError(f"{where} must be a list of [x, y] pairs", path=path) from e


def read_mixture(path: Path) -> GaussianMixture:
    """Read a mixture from JSON: ``{"name", "seed", "components": [{"mean", "sigma", "weight"}]}``."""
    data = _load_json(path)
    if not isinstance(data, dict) or not isinstance(data.get("components"), list):
        raise SchemaError("Mixture must be an object with a 'components' list", path=path)
    components = []
    for index, item in enumerate(data["components"]):
        try:
            (mean,) = _points([item["mean"]], f"components[{index}].mean", path)
            components.append(Component(mean, float(item["sigma"]), float(item["weight"])))
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaError(f"components[{index}] needs mean, sigma and weight", path=path) from e
    try:
        return GaussianMixture(
            components=tuple(components),
            seed=int(data.get("seed", 0)),
            name=str(data.get("name", path.stem)),
        )
    except (HeatmapError, ValueError) as e:
        raise SchemaError(str(e), path=path) from e


def _track(item: Any, where: str, path: Path) -> AgentTrack:
    if not isinstance(item, dict):
        raise SchemaError(f"{where} must be an object", path=path)
    points = _points(item.get("points", []), f"{where}.points", path)
    try:
        if "timestamps" in item:
            history = AgentHistory(
                points=points,
                timestamps=tuple(item["timestamps"]),
                padding_mask=tuple(item.get("padding", [False] * len(points))),
            )
        else:
            history = AgentHistory.from_points(points)
            if "padding" in item:
                history = AgentHistory(points, history.timestamps, tuple(item["padding"]))
        headings = item.get("headings")
        return AgentTrack(
            history=history,
            length=float(item["length"]),
            width=float(item["width"]),
            headings=tuple(headings) if headings is not None else None,
        )
    except KeyError as e:
        raise SchemaError(f"{where} is missing {e.args[0]!r}", path=path) from e
    except (HeatmapError, TypeError, ValueError) as e:
        raise SchemaError(f"{where}: {e}", path=path) from e


def read_scene(path: Path) -> Scene:
    """Read a scene from JSON; every key is optional and ``{}`` is an empty scene."""
    data = _load_json(path)
    if not isinstance(data, dict):
        raise SchemaError("Scene must be a JSON object", path=path)
    try:
        centerlines = tuple(
            Centerline(
                points=_points(item["points"], f"centerlines[{i}].points", path),
                headings=tuple(float(h) for h in item["headings"]),
            )
            for i, item in enumerate(data.get("centerlines", []))
        )
        target = data.get("target")
        return Scene(
            drivable=tuple(
                _points(ring, f"drivable[{i}]", path) for i, ring in enumerate(data.get("drivable", []))
            ),
            boundaries=tuple(
                _points(line, f"boundaries[{i}]", path) for i, line in enumerate(data.get("boundaries", []))
            ),
            centerlines=centerlines,
            target=_track(target, "target", path) if target is not None else None,
            neighbors=tuple(
                _track(item, f"neighbors[{i}]", path) for i, item in enumerate(data.get("neighbors", []))
            ),
        )
    except SchemaError:
        raise
    except KeyError as e:
        raise SchemaError(f"Scene entry is missing {e.args[0]!r}", path=path) from e
    except (HeatmapError, TypeError, ValueError) as e:
        raise SchemaError(str(e), path=path) from e
