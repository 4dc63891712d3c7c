import textwrap
from pathlib import Path

import pytest

from byzavg.cli import main


def write_config(tmp_path, body):
    path = tmp_path / "cfg.ini"
    path.write_text(textwrap.dedent(body))
    return str(path)


AVG_BODY = """
    [run]
    trials = 3
    seed = 12

    [protocol]
    variant = mda
    n = 7
    f = 1
    agreement = 2

    [family]
    dim = 2
    kind = random-normal
    scale = 1.5

    [adversary]
    kind = random-noise
    scale = 4.0
"""


def test_avg_bounds_hold_and_outputs(tmp_path, capsys):
    cfg = write_config(tmp_path, AVG_BODY)
    out = tmp_path / "run.csv"
    assert main(["avg", "--config", cfg, "--out", str(out)]) == 0
    text = out.read_text()
    assert text.startswith("# tool = byzavg")
    assert "row_type,trial,round" in text
    assert "diameter-halving" in text and "averaging-constant" in text
    assert (tmp_path / "run.png").exists()


def test_avg_csv_replay_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path, AVG_BODY)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["avg", "--config", cfg, "--out", str(a), "--no-figures"]) == 0
    assert main(["avg", "--config", cfg, "--out", str(b), "--no-figures"]) == 0
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.csv"
    assert main(["avg", "--config", cfg, "--seed", "99", "--out", str(c), "--no-figures"]) == 0
    assert a.read_bytes() != c.read_bytes()


def test_avg_infeasible_config(tmp_path, capsys):
    cfg = write_config(
        tmp_path,
        """
        [protocol]
        variant = mda
        n = 6
        f = 1
        """,
    )
    assert main(["avg", "--config", cfg]) == 2
    assert "infeasible" in capsys.readouterr().err


def test_avg_rbtm_with_given_family(tmp_path):
    cfg = write_config(
        tmp_path,
        """
        [protocol]
        variant = rbtm
        n = 4
        f = 1
        agreement = 1

        [family]
        kind = given
        values = 0; 1; 5

        [adversary]
        kind = mimic-extreme
        """,
    )
    assert main(["avg", "--config", cfg, "--out", str(tmp_path / "r.csv"), "--no-figures"]) == 0


def test_avg_full_trace_emits_node_rows(tmp_path):
    cfg = write_config(tmp_path, AVG_BODY)
    out = tmp_path / "full.csv"
    assert main(["avg", "--config", cfg, "--trials", "1", "--out", str(out), "--full-trace", "--no-figures"]) == 0
    assert any(line.startswith("node,") for line in out.read_text().splitlines())


def test_avg_lower_bound_attack_demo(tmp_path):
    cfg = write_config(
        tmp_path,
        """
        [protocol]
        variant = mda
        n = 7
        f = 1
        agreement = 4

        [adversary]
        kind = lower-bound-split
        """,
    )
    out = tmp_path / "t4.csv"
    assert main(["avg", "--config", cfg, "--out", str(out), "--no-figures"]) == 0
    assert "forced-deviation-floor" in out.read_text()


def test_avg_six_f_demo(tmp_path):
    cfg = write_config(
        tmp_path,
        """
        [protocol]
        variant = mda
        n = 6
        f = 1
        agreement = 2

        [adversary]
        kind = six-f-breaker
        """,
    )
    out = tmp_path / "sixf.csv"
    assert main(["avg", "--config", cfg, "--out", str(out)]) == 0
    text = out.read_text()
    assert "stall-multiplier-exact" in text and "halving-violated" in text


def test_learn_command(tmp_path):
    cfg = write_config(
        tmp_path,
        """
        [run]
        trials = 2
        seed = 4

        [protocol]
        variant = mda
        n = 7
        f = 1

        [learn]
        algorithm = learn
        model = quadratic
        delta = 0.5
        sigma = 1.0
        iterations = 12
        dim = 2
        center_spread = 0.4

        [adversary]
        kind = random-noise
        scale = 1.0
        """,
    )
    out = tmp_path / "learn.csv"
    assert main(["learn", "--config", cfg, "--out", str(out)]) == 0
    text = out.read_text()
    assert "mean-final-spread-squared" in text
    assert (tmp_path / "learn.png").exists()


def test_learn_hom_rejects_heterogeneous(tmp_path, capsys):
    cfg = write_config(
        tmp_path,
        """
        [protocol]
        variant = rbtm
        n = 4
        f = 1

        [learn]
        algorithm = hom-learn
        model = quadratic
        delta = 0.5
        iterations = 4
        dim = 1
        centers = 0; 1; 2
        """,
    )
    assert main(["learn", "--config", cfg]) == 2
    assert "invalid config" in capsys.readouterr().err


def test_learn_avg_via_learn(tmp_path):
    cfg = write_config(
        tmp_path,
        """
        [run]
        trials = 3
        seed = 2

        [protocol]
        variant = mda
        n = 7
        f = 1

        [family]
        kind = given
        values = 0; 1; 2; 3; 4; 5

        [learn]
        algorithm = avg-via-learn
        agreement = 2
        iterations = 16
        """,
    )
    out = tmp_path / "avl.csv"
    assert main(["learn", "--config", cfg, "--out", str(out), "--no-figures"]) == 0
    assert "mean-output-diameter" in out.read_text()


def test_verify_subcommand(capsys):
    assert main(["verify", "diameters"]) == 0
    assert "[pass]" in capsys.readouterr().out
    assert main(["verify", "no-such-suite"]) == 2


def test_missing_config_file(capsys):
    assert main(["avg", "--config", "/nonexistent/x.ini"]) == 2
