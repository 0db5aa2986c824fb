"""plotview tests.

Fixture data is produced by driving the solver package through its public
command line, the only interface this package consumes.
"""

import json
import math
import subprocess
import sys

import numpy as np
import pytest

from plotview import KINDS, FigureSpec, PlotDataError, render
from plotview.cli import main
from plotview.render import load_trace, rate_regression


def _run_emlab(experiment: str, cfg: dict, out_dir) -> None:
    cfg_path = out_dir / "config.json"
    cfg_path.write_text(json.dumps(cfg))
    subprocess.run(
        [
            sys.executable, "-m", "emlab.cli", "run", experiment,
            "--config", str(cfg_path), "--out-dir", str(out_dir),
        ],
        check=True,
        capture_output=True,
    )


@pytest.fixture(scope="session")
def curved_outputs(tmp_path_factory):
    out = tmp_path_factory.mktemp("curved")
    _run_emlab("gaussian-curved", {"y": 1.0, "theta0": [2.0, -1.0]}, out)
    return out


@pytest.fixture(scope="session")
def hat_outputs(tmp_path_factory):
    out = tmp_path_factory.mktemp("hat")
    _run_emlab("mexican-hat", {"r0": 0.5, "steps": 4000}, out)
    return out


class TestAllKindsRender:
    @pytest.mark.parametrize("kind", KINDS)
    def test_curved_outputs(self, curved_outputs, tmp_path, kind):
        out = render(
            FigureSpec(
                trace_path=curved_outputs / "trace.csv",
                summary_path=curved_outputs / "summary.json",
                kind=kind,
                out_path=tmp_path / f"curved_{kind}.png",
            )
        )
        assert out.exists() and out.stat().st_size > 1000

    @pytest.mark.parametrize("kind", KINDS)
    def test_hat_outputs(self, hat_outputs, tmp_path, kind):
        out = render(
            FigureSpec(
                trace_path=hat_outputs / "trace.csv",
                summary_path=hat_outputs / "summary.json",
                kind=kind,
                out_path=tmp_path / f"hat_{kind}.png",
            )
        )
        assert out.exists() and out.stat().st_size > 1000


class TestRateAnnotation:
    def test_slope_matches_summary_within_two_percent(self, curved_outputs):
        summary = json.loads((curved_outputs / "summary.json").read_text())
        fit = summary["rate_fit"]
        assert fit["kind"] == "linear"
        trace = load_trace(curved_outputs / "trace.csv")
        _, _, param = rate_regression(trace, fit["kind"])
        assert param == pytest.approx(fit["param"], rel=0.02)

    def test_synthetic_sublinear_regression(self, tmp_path):
        # hand-built trace with ||x_k|| = 1/k
        rows = ["k,x0,x1,f,psi_reg,step_norm,proj_step_norm,residual,lambda,domain_margin"]
        pts = [(1.0 / k, 0.0) for k in range(1, 300)] + [(0.0, 0.0)]
        for k, (a, b) in enumerate(pts):
            rows.append(f"{k},{a!r},{b!r},0.0,0.0,0.0,0.0,0.0,1.0,inf")
        p = tmp_path / "trace.csv"
        p.write_text("\n".join(rows) + "\n")
        trace = load_trace(p)
        _, _, rho = rate_regression(trace, "sublinear")
        assert rho == pytest.approx(1.0, rel=0.05)


class TestIdempotence:
    def test_same_bytes_on_rerender(self, curved_outputs, tmp_path):
        spec1 = FigureSpec(
            curved_outputs / "trace.csv", curved_outputs / "summary.json",
            "objective", tmp_path / "a.png",
        )
        spec2 = FigureSpec(
            curved_outputs / "trace.csv", curved_outputs / "summary.json",
            "objective", tmp_path / "b.png",
        )
        a = render(spec1).read_bytes()
        b = render(spec2).read_bytes()
        assert a == b

    def test_inputs_not_mutated(self, curved_outputs, tmp_path):
        before = (curved_outputs / "trace.csv").read_bytes()
        render(
            FigureSpec(
                curved_outputs / "trace.csv", curved_outputs / "summary.json",
                "trajectory", tmp_path / "t.png",
            )
        )
        assert (curved_outputs / "trace.csv").read_bytes() == before


class TestSchemaErrors:
    def test_empty_trace(self, tmp_path, curved_outputs):
        p = tmp_path / "trace.csv"
        p.write_text("k,x0,x1,f,psi_reg,step_norm,proj_step_norm,residual,lambda,domain_margin\n")
        with pytest.raises(PlotDataError, match="no data rows"):
            render(FigureSpec(p, curved_outputs / "summary.json", "objective", tmp_path / "x.png"))

    def test_missing_column_named(self, tmp_path, curved_outputs):
        p = tmp_path / "trace.csv"
        p.write_text("k,x0,x1,psi_reg,step_norm,proj_step_norm,residual,lambda,domain_margin\n0,1,2,0,0,0,0,1,1\n")
        with pytest.raises(PlotDataError, match="'f'"):
            render(FigureSpec(p, curved_outputs / "summary.json", "objective", tmp_path / "x.png"))

    def test_unknown_kind(self, curved_outputs, tmp_path):
        with pytest.raises(PlotDataError, match="unknown figure kind"):
            render(
                FigureSpec(
                    curved_outputs / "trace.csv", curved_outputs / "summary.json",
                    "sparkline", tmp_path / "x.png",
                )
            )


class TestCli:
    def test_end_to_end(self, curved_outputs, tmp_path):
        out = tmp_path / "fig.png"
        rc = main(
            [
                "--trace", str(curved_outputs / "trace.csv"),
                "--summary", str(curved_outputs / "summary.json"),
                "--kind", "rate",
                "--out", str(out),
            ]
        )
        assert rc == 0
        assert out.exists()

    def test_error_exit_code(self, tmp_path):
        rc = main(
            [
                "--trace", str(tmp_path / "missing.csv"),
                "--summary", str(tmp_path / "missing.json"),
                "--kind", "rate",
                "--out", str(tmp_path / "fig.png"),
            ]
        )
        assert rc == 1
