"""End-to-end command line behavior, run in-process via main(argv)."""
from __future__ import annotations

import json

import pytest
import yaml

from rtlevo.cli import EXIT_ABORT, EXIT_FOUND, EXIT_NOT_FOUND, main

SCRIPT_OK = """\
- match: strategy:initial
  response:
    thought: two half adders chained
    code: |
      module add2(input [1:0] a, input [1:0] b, output [2:0] s);
        assign s = a + b;
      endmodule
      // PPA: power=0.9 area=95 period=1.0
  repeat: true
- match: strategy:fix
  response: {thought: patch, code: "module add2; endmodule\\n// PPA: power=0.8 area=90 period=1.0"}
  repeat: true
- match: strategy:simplify
  response: {thought: shrink, code: "module add2; endmodule\\n// PPA: power=0.7 area=80 period=1.0"}
  repeat: true
- match: strategy:explore
  response: {thought: wild, code: "module add2; endmodule\\n// PPA: power=0.95 area=99 period=1.0"}
  repeat: true
- match: strategy:refactor
  response: {thought: rewrite, code: "module add2; endmodule\\n// PPA: power=0.85 area=92 period=1.0"}
  repeat: true
- match: strategy:improve
  response: {thought: tune, code: "module add2; endmodule\\n// PPA: power=0.5 area=50 period=1.0"}
  repeat: true
- match: strategy:fusion
  response: {thought: merge, code: "module add2; endmodule\\n// PPA: power=0.4 area=40 period=1.0"}
  repeat: true
- match: purpose:feedback
  response: consider a carry-save structure
  repeat: true
"""

SCRIPT_ALL_FAIL = """\
- match: "purpose:generate"
  response: "## Thought\\nbroken\\n\\n## Code\\n```verilog\\nmodule add2; endmodule // BUG\\n```"
  repeat: true
- match: "purpose:feedback"
  response: still broken
  repeat: true
"""


def write_setup(tmp_path, script=SCRIPT_OK, config_overrides=None):
    (tmp_path / "script.yaml").write_text(script, encoding="utf-8")
    config = {
        "problem": {
            "name": "add2",
            "description": "a two bit adder with carry out named add2",
            "circuit_kind": "combinational",
            "reference_ppa": {
                "power": 1.0,
                "area": 100.0,
                "effective_clock_period": 1.0,
            },
        },
        "evolution": {
            "population_size": 3,
            "offspring_count": 3,
            "max_generations": 2,
            "elite_per_metric": 1,
            "rng_seed": 1,
        },
        "provider": {"kind": "scripted", "script_file": "script.yaml"},
        "evaluator": {"kind": "synthetic"},
        "output_dir": str(tmp_path / "run"),
    }
    for dotted, value in (config_overrides or {}).items():
        node = config
        *parents, leaf = dotted.split(".")
        for part in parents:
            node = node.setdefault(part, {})
        node[leaf] = value
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(config), encoding="utf-8")
    return path


def test_run_writes_run_directory(tmp_path, capsys):
    config = write_setup(tmp_path)
    code = main(["run", "--config", str(config)])
    assert code == EXIT_FOUND
    out = capsys.readouterr().out
    assert "run complete" in out
    run_dir = tmp_path / "run"
    assert (run_dir / "generations.jsonl").is_file()
    assert (run_dir / "transcripts.jsonl").is_file()
    assert (run_dir / "config_snapshot.yaml").is_file()
    assert (run_dir / "final_report.json").is_file()


def test_run_final_report_contents(tmp_path):
    config = write_setup(tmp_path)
    main(["run", "--config", str(config)])
    final = json.loads((tmp_path / "run" / "final_report.json").read_text(encoding="utf-8"))
    assert final["found_correct"] is True
    assert final["problem"] == "add2"
    assert final["generations"] == 3  # generation 0 plus two iterations
    assert final["best"]["fitness"] > 0
    assert "timings" in final and final["timings"]["total_s"] > 0
    assert set(final["bandit_states"]) == {"fail", "success"}


def test_run_transcript_covers_every_call(tmp_path):
    config = write_setup(tmp_path)
    main(["run", "--config", str(config)])
    lines = (tmp_path / "run" / "transcripts.jsonl").read_text(encoding="utf-8").splitlines()
    records = [json.loads(line) for line in lines]
    generates = [r for r in records if r["purpose"] == "generate"]
    feedbacks = [r for r in records if r["purpose"] == "feedback"]
    # 3 initial + 3 offspring x 2 generations, one feedback per evaluation
    assert len(generates) == 9
    assert len(feedbacks) == 9


def test_report_renders_summary(tmp_path, capsys):
    config = write_setup(tmp_path)
    main(["run", "--config", str(config)])
    capsys.readouterr()
    code = main(["report", str(tmp_path / "run")])
    assert code == EXIT_FOUND
    out = capsys.readouterr().out
    assert "Best individual" in out
    assert "Power improv." in out
    assert "gen 0" in out


def test_validate_config_ok(tmp_path, capsys):
    config = write_setup(tmp_path)
    assert main(["validate-config", "--config", str(config)]) == EXIT_FOUND
    out = capsys.readouterr().out
    assert "config OK" in out
    assert "N=3" in out
    assert "provider=scripted" in out


def test_unknown_config_key_aborts(tmp_path, capsys):
    config = write_setup(tmp_path, config_overrides={"verbozity": 1})
    assert main(["validate-config", "--config", str(config)]) == EXIT_ABORT
    err = capsys.readouterr().err
    assert "error:" in err
    assert "verbozity" in err


def test_inline_api_key_aborts_with_guidance(tmp_path, capsys):
    config = write_setup(
        tmp_path,
        config_overrides={
            "provider": {
                "kind": "http",
                "endpoint_url": "https://example.invalid/v1",
                "api_key": "sk-nope",
            }
        },
    )
    assert main(["validate-config", "--config", str(config)]) == EXIT_ABORT
    assert "api_key_env_var" in capsys.readouterr().err


def test_dry_run_prints_prompts_and_touches_nothing(tmp_path, capsys):
    config = write_setup(tmp_path)
    code = main(["run", "--config", str(config), "--dry-run"])
    assert code == EXIT_FOUND
    out = capsys.readouterr().out
    assert "no provider was called" in out
    assert "add2" in out  # problem description is embedded
    assert not (tmp_path / "run").exists()


def test_all_fail_run_exits_two(tmp_path, capsys):
    config = write_setup(tmp_path, script=SCRIPT_ALL_FAIL)
    code = main(["run", "--config", str(config)])
    assert code == EXIT_NOT_FOUND
    assert "no functionally correct design" in capsys.readouterr().out


def test_report_on_missing_dir_aborts(tmp_path, capsys):
    code = main(["report", str(tmp_path / "nowhere")])
    assert code == EXIT_ABORT
    assert "error:" in capsys.readouterr().err


def test_ref_ppa_prints_json(tmp_path, capsys):
    config = write_setup(tmp_path)
    design = tmp_path / "golden.v"
    design.write_text(
        "module add2; endmodule\n// PPA: power=0.33 area=44 period=0.9\n",
        encoding="utf-8",
    )
    code = main(["ref-ppa", str(design), "--config", str(config)])
    assert code == EXIT_FOUND
    ppa = json.loads(capsys.readouterr().out)
    assert ppa == {"power": 0.33, "area": 44.0, "effective_clock_period": 0.9}


def test_ref_ppa_missing_design_aborts(tmp_path, capsys):
    config = write_setup(tmp_path)
    code = main(["ref-ppa", str(tmp_path / "ghost.v"), "--config", str(config)])
    assert code == EXIT_ABORT
    assert "ghost.v" in capsys.readouterr().err


def test_seed_override_changes_run(tmp_path):
    config = write_setup(tmp_path)
    main(["run", "--config", str(config), "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["run", "--config", str(config), "--out", str(tmp_path / "b"), "--seed", "2"])
    a = (tmp_path / "a" / "generations.jsonl").read_bytes()
    b = (tmp_path / "b" / "generations.jsonl").read_bytes()
    assert a != b


def test_generations_override(tmp_path):
    config = write_setup(tmp_path)
    main(["run", "--config", str(config), "--generations", "1"])
    lines = (tmp_path / "run" / "generations.jsonl").read_text(encoding="utf-8").splitlines()
    # schema header plus generation 0 and generation 1
    assert len(lines) == 3


def test_missing_api_key_env_aborts(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("RTLEVO_CLI_KEY", raising=False)
    config = write_setup(
        tmp_path,
        config_overrides={
            "provider": {
                "kind": "http",
                "endpoint_url": "http://127.0.0.1:9/v1",
                "api_key_env_var": "RTLEVO_CLI_KEY",
            }
        },
    )
    code = main(["run", "--config", str(config)])
    assert code == EXIT_ABORT
    assert "RTLEVO_CLI_KEY" in capsys.readouterr().err


def test_config_snapshot_holds_resolved_values(tmp_path):
    config = write_setup(tmp_path)
    main(["run", "--config", str(config), "--seed", "42"])
    snap = yaml.safe_load(
        (tmp_path / "run" / "config_snapshot.yaml").read_text(encoding="utf-8")
    )
    assert snap["evolution"]["rng_seed"] == 42
    assert snap["evolution"]["weights"] == {"alpha": 0.5, "beta": 0.5, "gamma": 0.0}
