import pytest

from aris.cli import main

TINY = "[scenario]\nn_slots = 3\n[solver]\ni_max = 2\n"


def test_presets_list(capsys):
    assert main(["presets", "list"]) == 0
    out = capsys.readouterr().out
    assert "pb_sweep: p_b_dbm in {40, 42, 44, 46, 47}" in out
    assert len(out.strip().split("\n")) == 10


def test_run_config(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text(TINY + "[experiment]\nname = convergence\nschemes = no_ris\ntrials = 1\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "o"), "--seed", "4"]) == 0
    assert (tmp_path / "o" / "results.csv").exists()
    assert (tmp_path / "o" / "convergence.csv").exists()
    assert "seed = 4" in (tmp_path / "o" / "config_resolved.txt").read_text()


def test_bad_config_exits_nonzero(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[scenario]\nk_users = -2\n")
    assert main(["run", str(cfg)]) == 2
    assert "scenario.k_users" in capsys.readouterr().err


def test_unknown_preset_exits_nonzero(capsys):
    assert main(["presets", "run", "nothing"]) == 2
    assert "nothing" in capsys.readouterr().err


def test_unwritable_output_exits_nonzero(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["presets", "run", "convergence", "--out", str(blocker / "x"), "--trials", "1"]) == 2


def test_reduced_precision_exit_code(tmp_path, capsys, monkeypatch):
    import aris.bcd as bcd

    original = bcd.run_scheme

    def flagged(*a, **kw):
        state, rep = original(*a, **kw)
        state.reduced_precision = True
        return state, rep

    monkeypatch.setattr(bcd, "run_scheme", flagged)
    cfg = tmp_path / "run.ini"
    cfg.write_text(TINY + "[experiment]\nschemes = no_ris\ntrials = 1\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 3
    assert "reduced precision" in capsys.readouterr().err


def test_missing_subcommand_is_usage_error():
    with pytest.raises(SystemExit):
        main([])
