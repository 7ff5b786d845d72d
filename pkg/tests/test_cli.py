"""Tests for the command line interface."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import pytest

from locc_marker import __version__
from locc_marker.ensembles import serialize_ensemble
from locc_marker.main import (
    EXIT_CAP_EXCEEDED,
    EXIT_CLAIM_FAILURE,
    EXIT_INPUT_ERROR,
    EXIT_NO_PROTOCOL,
    EXIT_OK,
    EXIT_UNDECIDABLE,
    main,
    parse_args,
)
from tests.conftest import FIXTURES_DIR
from tests.test_upb import generalized_bell


def run_json(capsys: pytest.CaptureFixture[str], *argv: str) -> tuple[int, Any]:
    code = main([*argv, "--format", "json"])
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip() else None


class TestParseArgs:
    """Tests for argument parsing."""

    def test_version(self, capsys: pytest.CaptureFixture[str]) -> None:
        """Test --version prints the package version."""
        with pytest.raises(SystemExit) as exc_info:
            parse_args(["--version"])
        assert exc_info.value.code == 0
        assert __version__ in capsys.readouterr().out

    def test_named_and_file_exclusive(self) -> None:
        """Test an ensemble comes from a name or a file, not both."""
        with pytest.raises(SystemExit):
            parse_args(["analyze", "--named", "bell", "--file", "x.json"])

    def test_command_required(self) -> None:
        """Test a subcommand is required."""
        with pytest.raises(SystemExit):
            parse_args([])

    def test_options_after_command(self) -> None:
        """Test shared options follow the subcommand."""
        args = parse_args(["detect", "--named", "duan4", "--target", "D1", "--seed", "5"])
        assert args.command == "detect"
        assert args.seed == 5


class TestAnalyze:
    """Tests for the analyze command."""

    def test_bennett_marking(self, capsys: pytest.CaptureFixture[str]) -> None:
        """Test Bennett states are distinguishable and 2-markable."""
        code, doc = run_json(capsys, "analyze", "--named", "bennett9", "--m", "2")
        assert code == EXIT_OK
        assert doc["kind"] == "analysis"
        assert doc["clsd"]["overall"] == "distinguishable"
        assert doc["clsm"]["overall"] == "distinguishable"
        assert doc["clsm"]["m"] == 2
        assert doc["global_min_detector_overlap"] == pytest.approx(1.0)

    def test_duan_marking(self, capsys: pytest.CaptureFixture[str]) -> None:
        """Test Duan 2-marking is reported infeasible with 2048 branches for D1.D2."""
        code, doc = run_json(capsys, "analyze", "--named", "duan4", "--m", "2")
        assert code == EXIT_OK
        assert doc["clsm"]["overall"] == "indistinguishable"
        assert doc["clsm"]["per_state"]["D1.D2"]["evidence"]["branch_count"] == 2048

    def test_text_output(self, capsys: pytest.CaptureFixture[str]) -> None:
        """Test the default text rendering."""
        assert main(["analyze", "--named", "pw_trine"]) == EXIT_OK
        assert "overall: distinguishable" in capsys.readouterr().out

    def test_branch_cap(self, capsys: pytest.CaptureFixture[str]) -> None:
        """Test exceeding the branch cap exits with its own code."""
        assert main(["analyze", "--named", "bennett9", "--branch-cap", "4"]) == EXIT_CAP_EXCEEDED

    @pytest.mark.parametrize(
        "fixture", ["mismatched_dims.json", "empty_members.json", "bad_norm.json"]
    )
    def test_invalid_file(self, fixture: str, capsys: pytest.CaptureFixture[str]) -> None:
        """Test malformed ensemble files are input errors."""
        assert main(["analyze", "--file", str(FIXTURES_DIR / fixture)]) == EXIT_INPUT_ERROR
        assert capsys.readouterr().out == ""

    def test_missing_file(self) -> None:
        """Test a missing ensemble file is an input error."""
        assert main(["analyze", "--file", "/nonexistent/ensemble.json"]) == EXIT_INPUT_ERROR

    def test_no_source(self) -> None:
        """Test an ensemble source is required."""
        assert main(["analyze"]) == EXIT_INPUT_ERROR

    def test_unknown_ensemble(self) -> None:
        """Test unknown names are input errors."""
        assert main(["analyze", "--named", "bennet9"]) == EXIT_INPUT_ERROR


class TestClassify:
    """Tests for the classify command."""

    def test_tiles(self, capsys: pytest.CaptureFixture[str]) -> None:
        """Test the Tiles UPB is classified genuine."""
        code, doc = run_json(capsys, "classify", "--named", "upb_tiles")
        assert code == EXIT_OK
        assert doc["flags"]["is_gupb"] is True

    def test_marking_set(self, capsys: pytest.CaptureFixture[str]) -> None:
        """Test --m classifies the derived marking set."""
        code, doc = run_json(capsys, "classify", "--named", "double_sic_antiparallel", "--m", "2")
        assert code == EXIT_OK
        assert doc["ensemble"] == "double_sic_antiparallel[m=2]"
        assert doc["flags"]["is_upb"] is True
        assert doc["flags"]["is_gupb"] is False

    def test_undecidable(self, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """Test sets outside the exact fragments exit undecidable but still report."""
        path = tmp_path / "gbell5.json"
        path.write_text(serialize_ensemble(generalized_bell(5)))
        code, doc = run_json(capsys, "classify", "--file", str(path))
        assert code == EXIT_UNDECIDABLE
        assert doc["decidable"] is False


class TestDetect:
    """Tests for the detect command."""

    def test_certificate(self, capsys: pytest.CaptureFixture[str]) -> None:
        """Test a found detector is reported as a certificate."""
        code, doc = run_json(capsys, "detect", "--named", "bennett9", "--target", "psi1")
        assert code == EXIT_OK
        assert doc["kind"] == "certificate"
        assert doc["result"]["target_overlap_modulus"] == pytest.approx(1.0)

    def test_infeasibility(self, capsys: pytest.CaptureFixture[str]) -> None:
        """Test the derived-set target reports its failed branches."""
        code, doc = run_json(capsys, "detect", "--named", "duan4", "--m", "2", "--target", "D1.D2")
        assert code == EXIT_OK
        assert doc["kind"] == "infeasibility"
        assert doc["result"]["branch_count"] == 2048

    def test_unknown_target(self) -> None:
        """Test unknown member labels are input errors."""
        assert main(["detect", "--named", "duan4", "--target", "D7"]) == EXIT_INPUT_ERROR


class TestMark:
    """Tests for the mark command."""

    def test_sequential(self, capsys: pytest.CaptureFixture[str]) -> None:
        """Test Bennett 2-marking runs the sequential protocol without error."""
        code, doc = run_json(capsys, "mark", "--named", "bennett9", "--m", "2")
        assert code == EXIT_OK
        assert doc["protocol"] == "sequential_marking"
        assert doc["zero_error"] is True
        assert len(doc["per_hypothesis"]) == 72

    def test_no_protocol(self) -> None:
        """Test ensembles without detectors exit with no protocol."""
        assert main(["mark", "--named", "duan4", "--m", "2"]) == EXIT_NO_PROTOCOL

    def test_yu(self, capsys: pytest.CaptureFixture[str]) -> None:
        """Test the Yu pair picks its named protocol."""
        code, doc = run_json(
            capsys, "mark", "--named", "yu", "--d", "3", "--m", "2", "--mode", "any_anticorrelated"
        )
        assert code == EXIT_OK
        assert doc["protocol"] == "yu_marking"
        for outcome in doc["per_hypothesis"].values():
            assert outcome["success_probability"] == pytest.approx(0.75)

    def test_upb_pair(self, capsys: pytest.CaptureFixture[str]) -> None:
        """Test the UPB-based pair marks with 1/5."""
        code, doc = run_json(capsys, "mark", "--named", "xb_from_upb")
        assert code == EXIT_OK
        for outcome in doc["per_hypothesis"].values():
            assert outcome["success_probability"] == pytest.approx(0.2)

    def test_pw_conclusive(self, capsys: pytest.CaptureFixture[str]) -> None:
        """Test an explicit protocol with a labelled target."""
        code, doc = run_json(capsys, "mark", "--protocol", "pw_conclusive", "--target", "w1w1")
        assert code == EXIT_OK
        assert doc["per_hypothesis"]["w1w1"]["success_probability"] == pytest.approx(9 / 16)

    def test_wrong_m(self) -> None:
        """Test named marking protocols check m."""
        assert main(["mark", "--named", "yu", "--d", "2", "--m", "3"]) == EXIT_INPUT_ERROR


class TestReproduce:
    """Tests for the reproduce command."""

    def test_selected_claims(self, capsys: pytest.CaptureFixture[str]) -> None:
        """Test selected claims pass and are reported in registry order."""
        code, doc = run_json(capsys, "reproduce", "eq2_smolin", "prop5")
        assert code == EXIT_OK
        assert [c["id"] for c in doc["claims"]] == ["prop5", "eq2_smolin"]
        assert {c["status"] for c in doc["claims"]} == {"pass"}

    def test_all_claims_byte_identical(self, tmp_path: Path) -> None:
        """Test two runs of every claim write the same JSON bytes."""
        outputs = []
        for run in ("first", "second"):
            out = tmp_path / f"{run}.json"
            main(["reproduce", "all", "--restarts", "20", "--format", "json", "--out", str(out)])
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]
        ids = [c["id"] for c in json.loads(outputs[0])["claims"]]
        assert len(ids) == len(set(ids)) > 1

    def test_unknown_claim(self) -> None:
        """Test unknown claim ids are input errors."""
        assert main(["reproduce", "prop99"]) == EXIT_INPUT_ERROR

    def test_failure_exit_code(self, monkeypatch: pytest.MonkeyPatch) -> None:
        """Test a failed claim exits with the claim failure code."""
        from locc_marker import claims

        entry = claims.CLAIMS["eq2_smolin"]
        monkeypatch.setitem(
            claims.CLAIMS,
            "eq2_smolin",
            claims.Claim(entry.claim_id, entry.description, lambda config: ({}, {}, False)),
        )
        assert main(["reproduce", "eq2_smolin"]) == EXIT_CLAIM_FAILURE


class TestEnsemblesAndOutput:
    """Tests for listing, output files and config handling."""

    def test_list(self, capsys: pytest.CaptureFixture[str]) -> None:
        """Test builders are listed with their parameters."""
        code, doc = run_json(capsys, "ensembles")
        assert code == EXIT_OK
        names = {b["name"]: b for b in doc["ensembles"]}
        assert names["yu"]["parameters"] == ["d"]
        assert "bennett9" in names

    def test_serialize_named(self, capsys: pytest.CaptureFixture[str]) -> None:
        """Test one ensemble is printed as an ensemble document."""
        assert main(["ensembles", "--named", "duan4"]) == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert [m["label"] for m in doc["members"]] == ["D1", "D2", "D3", "D4"]

    def test_serialize_marking_set(self, capsys: pytest.CaptureFixture[str]) -> None:
        """Test --m prints the derived set with its provenance."""
        assert main(["ensembles", "--named", "bell", "--m", "2"]) == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert doc["name"] == "bell[m=2]"
        assert doc["derived_from"]["m"] == 2
        assert len(doc["members"]) == 12

    def test_out_and_metrics(self, tmp_path: Path) -> None:
        """Test --out and --metrics-out write files."""
        out = tmp_path / "report.json"
        metrics = tmp_path / "metrics.prom"
        code = main(
            ["detect", "--named", "duan4", "--target", "D1", "--format", "json",
             "--out", str(out), "--metrics-out", str(metrics)]
        )
        assert code == EXIT_OK
        assert json.loads(out.read_text())["kind"] == "infeasibility"
        assert "locc_marker_branches_enumerated_total" in metrics.read_text()

    def test_config_file(self, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """Test the output format can come from a config file."""
        config = tmp_path / "run.yml"
        config.write_text("output_format: json\n")
        assert main(["ensembles", "--config", str(config)]) == EXIT_OK
        assert json.loads(capsys.readouterr().out)["kind"] == "ensembles"

    def test_missing_config(self) -> None:
        """Test a missing config file is an input error."""
        assert main(["ensembles", "--config", "/nonexistent/run.yml"]) == EXIT_INPUT_ERROR
