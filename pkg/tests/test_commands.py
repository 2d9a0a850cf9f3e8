"""Tests for the subcommand implementations."""

import json
from dataclasses import fields
from datetime import datetime, timezone
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pytest

from src.commands import (
    CommandResult,
    RunConfig,
    cmd_eval,
    cmd_raster,
    cmd_sample,
    cmd_sweep,
    cmd_verify,
)
from src.errors import ConfigError, GridFormatError
from src.grid import GridSpec, ProbabilityGrid
from src.grid_file import read_grids, write_grid
from src.metrics import assign_probabilities, evaluate_cases
from src.oracle import VerifyOutcome
from src.sampling import SamplerConfig, sample
from src.scenario import Component, GaussianMixture, mixture_to_grid
from src.tables import endpoint_cases, format_metrics, read_samples

SPEC = GridSpec.centered(48, 48, 0.5)

GT_CSV = "case_id,t,x,y\nleft,1,-3.0,0.0\nright,1,3.0,0.5\nfar,1,0.0,9.0\n"


@pytest.fixture
def mixture() -> GaussianMixture:
    return GaussianMixture(
        components=(Component((-3.0, 0.0), 1.0, 0.5), Component((3.0, 0.0), 1.0, 0.5)),
        name="fork",
    )


@pytest.fixture
def mixture_file(tmp_path: Path) -> Path:
    path = tmp_path / "mixture.json"
    path.write_text(
        json.dumps(
            {
                "name": "fork",
                "components": [
                    {"mean": [-3.0, 0.0], "sigma": 1.0, "weight": 0.5},
                    {"mean": [3.0, 0.0], "sigma": 1.0, "weight": 0.5},
                ],
            }
        )
    )
    return path


class TestCommandResult:
    """Tests for the CommandResult dataclass."""

    def test_duration(self):
        """Test duration between start and finish."""
        result = CommandResult(
            command="sample",
            success=True,
            started_at=datetime(2024, 1, 15, 10, 0, 0, tzinfo=timezone.utc),
            finished_at=datetime(2024, 1, 15, 10, 0, 5, tzinfo=timezone.utc),
        )

        assert result.duration_seconds == 5.0

    def test_unfinished_duration(self):
        """Test that an unfinished command has zero duration."""
        assert CommandResult(command="eval", success=False).duration_seconds == 0.0

    def test_finish(self):
        """Test that finish sets the outcome and end time."""
        result = CommandResult(command="verify", success=False).finish(success=True)

        assert result.success
        assert result.finished_at is not None

    def test_str_representation(self):
        """Test string representation of a command result."""
        result = CommandResult(
            command="sweep", success=False, outputs=[Path("curve.csv")], errors=["bad"]
        )

        result_str = str(result)
        assert "sweep failed" in result_str
        assert "curve.csv" in result_str
        assert "1 errors" in result_str


class TestRunConfig:
    """Tests for RunConfig validation."""

    def test_draws_must_be_positive(self):
        """Test that zero draws are rejected."""
        with pytest.raises(ConfigError):
            RunConfig("sweep", draws=0)

    def test_output_must_not_overwrite_input(self, tmp_path: Path):
        """Test that the output may not be an input."""
        path = tmp_path / "pred.csv"

        with pytest.raises(ConfigError):
            RunConfig("eval", inputs=(path, tmp_path / "gt.csv"), output=tmp_path / "." / "pred.csv")

    def test_stdout_output(self, tmp_path: Path):
        """Test that no output path is allowed."""
        assert RunConfig("sample", inputs=(tmp_path / "g.hgrd",)).output is None

    def test_fields(self):
        """Test that RunConfig holds only what the subcommands read."""
        assert [f.name for f in fields(RunConfig)] == ["subcommand", "inputs", "output", "seed", "draws"]


class TestCmdSample:
    """Tests for cmd_sample."""

    def test_delta_grid(self, tmp_path: Path):
        """Test that K=1 on a delta lands on it with probability 1."""
        grid_path = tmp_path / "delta.hgrd"
        write_grid(grid_path, ProbabilityGrid.delta(SPEC, (2.25, -1.25)))
        out = tmp_path / "samples.csv"

        result = cmd_sample(grid_path, SamplerConfig(k=1), "mr", out)

        assert result.success
        assert result.outputs == [out]
        samples = read_samples(out)
        assert samples.points == ((2.25, -1.25),)
        assert samples.probabilities == (1.0,)

    def test_stdout(self, tmp_path: Path, capsys):
        """Test that the CSV goes to stdout without --out."""
        grid_path = tmp_path / "delta.hgrd"
        write_grid(grid_path, ProbabilityGrid.delta(SPEC, (0.25, 0.25)))

        cmd_sample(grid_path, SamplerConfig(k=2), "nms")

        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "k,x,y,probability,covered_mass"
        assert len(lines) == 3

    def test_bad_grid_file(self, tmp_path: Path):
        """Test that a corrupt grid file is reported."""
        grid_path = tmp_path / "bad.hgrd"
        grid_path.write_bytes(b"not a grid")

        with pytest.raises(GridFormatError):
            cmd_sample(grid_path, SamplerConfig(), "mr")

    def test_byte_identical_reruns(self, tmp_path: Path, mixture: GaussianMixture):
        """Test that sampling the same heatmap twice writes identical files."""
        grid_path = tmp_path / "heatmap.hgrd"
        write_grid(grid_path, mixture_to_grid(mixture, SPEC))
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"
        cfg = SamplerConfig(k=3, fde_iters=2)

        cmd_sample(grid_path, cfg, "fde", first)
        cmd_sample(grid_path, cfg, "fde", second)

        assert first.read_bytes() == second.read_bytes()


class TestCmdEval:
    """Tests for cmd_eval."""

    def test_perfect_predictions(self, tmp_path: Path):
        """Test that predictions equal to the ground truth score zero."""
        gt = tmp_path / "gt.csv"
        gt.write_text("case_id,t,x,y\na,1,1.0,0.0\na,2,2.0,0.0\n")
        pred = tmp_path / "pred.csv"
        pred.write_text("case_id,k,t,x,y,prob\na,0,1,1.0,0.0,1.0\na,0,2,2.0,0.0,1.0\n")
        out = tmp_path / "metrics.json"

        cmd_eval(pred, gt, 2.0, out)

        metrics = json.loads(out.read_text())
        assert metrics == {
            "MR_1": 0.0,
            "minFDE_1": 0.0,
            "minADE_1": 0.0,
            "p-minFDE_1": 0.0,
            "p-minADE_1": 0.0,
            "num_cases": 1,
        }

    def test_sample_then_eval_matches_library(self, tmp_path: Path, mixture: GaussianMixture):
        """Test that evaluating a sample file equals evaluating in memory."""
        grid = mixture_to_grid(mixture, SPEC)
        grid_path = tmp_path / "heatmap.hgrd"
        write_grid(grid_path, grid)
        samples_path = tmp_path / "samples.csv"
        gt = tmp_path / "gt.csv"
        gt.write_text(GT_CSV)
        out = tmp_path / "metrics.json"
        cfg = SamplerConfig(k=2)

        cmd_sample(grid_path, cfg, "mr", samples_path)
        cmd_eval(samples_path, gt, 2.0, out)

        # The file stores float32 values, so sample from what was written
        stored = read_grids(grid_path)[0]
        samples = sample(stored, cfg, "mr")
        samples = samples.with_probabilities(assign_probabilities(stored, samples.points))
        expected = evaluate_cases(endpoint_cases(samples, gt), 2.0)
        assert out.read_text() == format_metrics(expected)
        assert json.loads(out.read_text())["num_cases"] == 3

    def test_byte_identical_reruns(self, tmp_path: Path):
        """Test that evaluating the same files twice writes identical reports."""
        gt = tmp_path / "gt.csv"
        gt.write_text(GT_CSV)
        pred = tmp_path / "pred.csv"
        pred.write_text(
            "case_id,k,t,x,y,prob\n"
            "left,0,1,-2.5,0.0,0.75\nleft,1,1,0.0,0.0,0.25\n"
            "right,0,1,3.0,0.0,0.5\nright,1,1,6.0,0.0,0.5\n"
            "far,0,1,0.0,4.0,0.5\nfar,1,1,0.0,5.0,0.5\n"
        )
        first, second = tmp_path / "a.json", tmp_path / "b.json"

        cmd_eval(pred, gt, 2.0, first)
        cmd_eval(pred, gt, 2.0, second)

        assert first.read_bytes() == second.read_bytes()


class TestCmdSweep:
    """Tests for cmd_sweep."""

    def test_curve_rows(self, tmp_path: Path, mixture_file: Path):
        """Test one row per L from 0 to l_max."""
        out = tmp_path / "curve.csv"

        cmd_sweep(mixture_file, SamplerConfig(k=2), 3, 500, 0, out, spec=SPEC)

        lines = out.read_text().splitlines()
        assert lines[0] == "L,expected_mr,expected_fde"
        assert [line.split(",")[0] for line in lines[1:]] == ["0", "1", "2", "3"]

    def test_byte_identical_reruns(self, tmp_path: Path, mixture_file: Path):
        """Test that equal inputs and seeds give identical files."""
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"

        cmd_sweep(mixture_file, SamplerConfig(k=2), 2, 500, 7, first, spec=SPEC)
        cmd_sweep(mixture_file, SamplerConfig(k=2), 2, 500, 7, second, spec=SPEC)

        assert first.read_bytes() == second.read_bytes()

    def test_negative_l_max(self, mixture_file: Path):
        """Test that a negative --l-max is rejected."""
        with pytest.raises(ConfigError):
            cmd_sweep(mixture_file, SamplerConfig(), -1, 10, 0)


class TestCmdVerify:
    """Tests for cmd_verify."""

    def test_twelve_two_ten(self, tmp_path: Path):
        """Test ten 12 x 12 grids with K=2."""
        out = tmp_path / "verify.csv"

        result = cmd_verify(12, 2, 10, out=out)

        assert result.success
        assert result.errors == []
        lines = out.read_text().splitlines()
        assert lines[0] == "seed,size,k,greedy,optimum,ratio,passed"
        assert len(lines) == 11
        assert all(line.endswith(",1") for line in lines[1:])

    def test_byte_identical_reruns(self, tmp_path: Path):
        """Test that verifying the same instances twice writes identical reports."""
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"

        cmd_verify(10, 2, 3, out=first)
        cmd_verify(10, 2, 3, out=second)

        assert first.read_bytes() == second.read_bytes()

    def test_violation_fails(self, tmp_path: Path):
        """Test that a bound violation fails the command."""
        failing = VerifyOutcome(0, 12, 2, greedy=0.1, optimum=1.0, greedy_points=(), optimal_points=())

        with patch("src.commands.verify_instances", return_value=[failing]):
            result = cmd_verify(12, 2, 1, out=tmp_path / "verify.csv")

        assert not result.success
        assert len(result.errors) == 1


class TestCmdRaster:
    """Tests for cmd_raster."""

    def test_empty_scene(self, tmp_path: Path):
        """Test that an empty scene writes 45 zero grids and a contact sheet."""
        scene = tmp_path / "scene.json"
        scene.write_text("{}")
        out = tmp_path / "stack.hgrd"
        pgm = tmp_path / "sheet.pgm"

        result = cmd_raster(scene, out, pgm, spec=GridSpec.centered(8, 8, 0.5))

        grids = read_grids(out)
        assert len(grids) == 45
        assert all(not np.any(g.values) for g in grids)
        assert pgm.read_bytes().startswith(b"P5\n72 40\n255\n")
        assert result.outputs == [out, pgm]

    def test_byte_identical_reruns(self, tmp_path: Path):
        """Test that rasterizing the same scene twice writes identical stacks and sheets."""
        scene = tmp_path / "scene.json"
        scene.write_text(
            json.dumps(
                {
                    "drivable": [[[-5, -5], [5, -5], [5, 5], [-5, 5], [-5, -5]]],
                    "boundaries": [[[-5, -5], [5, -5]]],
                    "centerlines": [{"points": [[0, -5], [0, 5]], "headings": [1.5, 1.5]}],
                    "target": {"points": [[-1.0, 0.0], [-0.5, 0.0], [0.0, 0.0]], "length": 4.5, "width": 1.9},
                }
            )
        )
        spec = GridSpec.centered(32, 32, 0.5)
        outputs = []
        for name in ("a", "b"):
            out, pgm = tmp_path / f"{name}.hgrd", tmp_path / f"{name}.pgm"
            cmd_raster(scene, out, pgm, spec=spec)
            outputs.append((out.read_bytes(), pgm.read_bytes()))

        assert outputs[0] == outputs[1]
        assert np.any(read_grids(tmp_path / "a.hgrd")[0].values)
