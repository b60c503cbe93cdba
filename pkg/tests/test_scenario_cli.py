"""Scenario loading and the command-line front end."""

import json

import pytest

from byzcone.errors import FormatError, ValidationError
from byzcone.haps import Go, LocalSend
from byzcone.cli import (EXIT_ASSERT, EXIT_BUDGET, EXIT_PASS, EXIT_USAGE,
                         main, parse_theta)
from byzcone.causal import Node
from byzcone.scenario import load_scenario

from conftest import CORPUS, SCENARIO_DIR, scenario


# ---------------------------------------------------------------------------
# Scenario loading
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("name", CORPUS)
def test_corpus_loads(name):
    scn = scenario(name)
    assert scn.name == name
    assert scn.ctx.n_agents >= 1
    for q in scn.queries:
        assert "kind" in q


def test_ping_scenario_contents(ping):
    ctx = ping.ctx
    assert ctx.n_agents == 2
    assert ctx.horizon == 4
    assert ctx.fault_bound == 1
    assert ctx.alphabet.messages == ("m",)
    assert len(ctx.env.choices(0)) == 4
    assert Go(1) in ctx.env.choices(0)[0]
    rng = ctx.joint[1].default
    assert rng == (frozenset({LocalSend(2, "m", 0)}), frozenset())


def test_missing_file(tmp_path):
    with pytest.raises(OSError):
        load_scenario(tmp_path / "nope.toml")


def test_bad_toml_rejected(tmp_path):
    path = tmp_path / "broken.toml"
    path.write_text("[system\n")
    with pytest.raises(FormatError):
        load_scenario(path)


def test_missing_section_rejected(tmp_path):
    path = tmp_path / "empty.toml"
    path.write_text("[env]\ndefault = [[\"go(1)\"]]\n")
    with pytest.raises(FormatError):
        load_scenario(path)


def test_incoherent_schedule_rejected(tmp_path):
    path = tmp_path / "incoherent.toml"
    path.write_text(
        '[system]\nagents = 1\ninitial = [["s"]]\n'
        '[env]\ndefault = [["go(1)", "sleep(1)"]]\n')
    with pytest.raises(ValidationError) as exc:
        load_scenario(path)
    assert "(a)" in str(exc.value)


def test_parse_theta():
    assert parse_theta("3@4") == Node(3, 4)
    from byzcone.errors import ByzconeError
    with pytest.raises(ByzconeError):
        parse_theta("3:4")


# ---------------------------------------------------------------------------
# CLI exit codes
# ---------------------------------------------------------------------------

def path(name):
    return str(SCENARIO_DIR / f"{name}.toml")


@pytest.mark.parametrize("name", CORPUS)
def test_check_passes(tmp_path, name, capsys):
    code = main(["check", path(name), "--out", str(tmp_path / "out")])
    captured = capsys.readouterr()
    assert code == EXIT_PASS, captured.out + captured.err
    assert "FAIL" not in captured.out


def test_check_writes_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["check", path("chain"), "--out", str(out)]) == EXIT_PASS
    capsys.readouterr()
    assert (out / "reports" / "chain-partition-3@4.txt").exists()
    assert (out / "reports" / "chain-lemma5.txt").exists()
    assert (out / "graphs" / "chain-3@4.dot").exists()


def test_assertion_failure_exit(tmp_path, capsys):
    code = main(["eval", path("vat"), "--formula", "(correct 1)",
                 "--expect", "false", "--out", str(tmp_path / "out")])
    capsys.readouterr()
    assert code == EXIT_ASSERT


def test_usage_error_exit(tmp_path, capsys):
    code = main(["partition", path("chain"), "--theta", "bogus",
                 "--out", str(tmp_path / "out")])
    capsys.readouterr()
    assert code == EXIT_USAGE
    code = main(["check", str(tmp_path / "missing.toml"),
                 "--out", str(tmp_path / "out")])
    capsys.readouterr()
    assert code == EXIT_USAGE


def test_budget_exceeded_exit(tmp_path, capsys):
    code = main(["enumerate", path("ping"), "--budget", "5",
                 "--out", str(tmp_path / "out")])
    capsys.readouterr()
    assert code == EXIT_BUDGET


def test_simulate_and_replay(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["simulate", path("chain"), "--out", str(out)]) == EXIT_PASS
    capsys.readouterr()
    dump = out / "traces" / "chain.json"
    assert dump.exists()
    doc = json.loads(dump.read_text())
    assert len(doc["rounds"]) == 4
    assert main(["replay", path("chain"), str(dump)]) == EXIT_PASS
    captured = capsys.readouterr()
    assert "replay ok" in captured.out


def test_replay_mismatch(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["simulate", path("chain"), "--out", str(out)]) == EXIT_PASS
    capsys.readouterr()
    dump = out / "traces" / "chain.json"
    doc = json.loads(dump.read_text())
    # replay re-dumps canonically (sorted haps), so a permuted event
    # list must be detected as a mismatch
    doc["rounds"][0]["beta_env"].reverse()
    assert len(doc["rounds"][0]["beta_env"]) > 1
    tampered = tmp_path / "tampered.json"
    tampered.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    assert main(["replay", path("chain"), str(tampered)]) == EXIT_ASSERT
    capsys.readouterr()


def test_horizon_flag(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["simulate", path("chain"), "--horizon", "2",
                 "--out", str(out)])
    capsys.readouterr()
    assert code == EXIT_PASS
    doc = json.loads((out / "traces" / "chain.json").read_text())
    assert len(doc["rounds"]) == 2


def test_partition_query_assertion(tmp_path, capsys):
    code = main(["partition", path("chain"), "--theta", "3@4",
                 "--out", str(tmp_path / "out")])
    captured = capsys.readouterr()
    assert code == EXIT_PASS
    assert "cone = " in captured.out


# ---------------------------------------------------------------------------
# Determinism
# ---------------------------------------------------------------------------

def run_check_tree(name, out):
    assert main(["check", path(name), "--out", str(out)]) == EXIT_PASS
    return {p.relative_to(out): p.read_bytes()
            for p in sorted(out.rglob("*")) if p.is_file()}


@pytest.mark.parametrize("name", ("chain", "vat"))
def test_check_outputs_deterministic(tmp_path, capsys, name):
    first = run_check_tree(name, tmp_path / "a")
    second = run_check_tree(name, tmp_path / "b")
    capsys.readouterr()
    assert first == second
    assert first   # something was actually written
