import csv
import hashlib
import re
from pathlib import Path

import numpy as np
import pytest

from sniffy.cli import build_parser, main
from sniffy.environment import load_bundle
from sniffy.genome import MANUAL
from sniffy.sim import read_metrics_csv, run_episode
from sniffy.svg import render_svg

Q = ["--quiet", "--jobs", "1"]


def sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def envdir(tmp_path_factory):
    out = tmp_path_factory.mktemp("envs")
    assert main(["gen-env", "--count", "2", "--rooms", "1:2", "--seed", "3", "--out", str(out)] + Q) == 0
    return out


def test_gen_env_manifest(envdir):
    rows = list(csv.DictReader(ln for ln in (envdir / "manifest.csv").read_text().splitlines()
                               if not ln.startswith("#")))
    assert len(rows) == 2
    for r in rows:
        assert sha(envdir / r["file"]) == r["sha256"]
        assert load_bundle(envdir / r["file"]).env.id == r["id"]
    assert "root_seed: 3" in (envdir / "manifest.csv").read_text()


def test_gen_env_empty_arena_and_rerun(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["gen-env", "--count", "1", "--rooms", "0", "--obstacles", "0", "--seed", "9",
                     "--out", str(d)] + Q) == 0
    assert sha(a / "manifest.csv") == sha(b / "manifest.csv")
    bundle = load_bundle(next(a.glob("*.gdm")))
    assert len(bundle.env.walls) == 4


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("SNIFFY_SEED", "9")
    assert main(["gen-env", "--count", "1", "--rooms", "0", "--obstacles", "0", "--out", str(tmp_path)] + Q) == 0
    assert "root_seed: 9" in (tmp_path / "manifest.csv").read_text()
    monkeypatch.setenv("SNIFFY_SEED", "nine")
    assert main(["gen-env", "--count", "1", "--out", str(tmp_path / "x")] + Q) == 1


def test_usage_errors_exit_one(tmp_path, capsys):
    assert main([]) == 1
    with pytest.raises(SystemExit) as e:
        main(["eval", "--bogus"])
    assert e.value.code == 1
    assert main(["gen-env", "--rooms", "3:1", "--out", str(tmp_path)] + Q) == 1
    assert main(["eval", "--policy", "infotaxis", "--bundles", str(tmp_path), "--out", str(tmp_path / "m.csv")]
                + Q) == 1


def test_data_errors_exit_two(tmp_path, envdir, capsys):
    assert main(["eval", "--bundles", str(tmp_path / "nope"), "--out", str(tmp_path / "m.csv")] + Q) == 2
    assert "does not exist" in capsys.readouterr().err
    assert main(["eval", "--genome", str(tmp_path / "missing.txt"), "--bundles", str(envdir),
                 "--out", str(tmp_path / "m.csv")] + Q) == 2
    bad = tmp_path / "bad.gdm"
    bad.write_bytes(b"garbage")
    assert main(["eval", "--bundles", str(bad), "--out", str(tmp_path / "m.csv")] + Q) == 2


def test_bad_config_key_is_named(tmp_path, envdir, capsys):
    cfg = tmp_path / "evo.cfg"
    cfg.write_text("population = 4\nmutaton_prob = 0.2\n")
    assert main(["evolve", "--bundles", str(envdir), "--config", str(cfg), "--out", str(tmp_path / "e")] + Q) == 1
    assert "mutaton_prob" in capsys.readouterr().err


def test_help_lists_every_flag(capsys):
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    for name, sp in sub.choices.items():
        text = sp.format_help()
        for action in sp._actions:
            for opt in action.option_strings:
                assert opt in text, (name, opt)


def _evolve(envdir, out, *extra):
    return main(["evolve", "--bundles", str(envdir), "--population", "4", "--generations", "2",
                 "--set", "envs_per_generation=2", "--set", "seeds_per_env=1", "--set", "final_seeds=1",
                 "--set", "checkpoint_every=1", "--sim", "episode_length=10", "--seed", "4",
                 "--out", str(out)] + Q + list(extra))


def test_evolve_outputs_and_doping_flag(envdir, tmp_path):
    assert _evolve(envdir, tmp_path / "on", "--doping", "on") == 0
    assert _evolve(envdir, tmp_path / "on2", "--doping", "on") == 0
    assert _evolve(envdir, tmp_path / "off", "--doping", "off") == 0
    for f in ("history.csv", "best.txt"):
        assert sha(tmp_path / "on" / f) == sha(tmp_path / "on2" / f)
    assert sha(tmp_path / "on" / "history.csv") != sha(tmp_path / "off" / "history.csv")
    best = (tmp_path / "on" / "best.txt").read_text()
    assert "root_seed: 4" in best
    assert main(["eval", "--genome", str(tmp_path / "on" / "best.txt"), "--bundles", str(envdir),
                 "--seeds-per-env", "1", "--sim", "episode_length=10", "--out", str(tmp_path / "m.csv")]
                + Q) == 0


def test_evolve_resume_matches(envdir, tmp_path):
    assert _evolve(envdir, tmp_path / "full") == 0
    assert _evolve(envdir, tmp_path / "part", "--stop-after", "1") == 0
    assert not (tmp_path / "part" / "history.csv").exists()
    assert _evolve(envdir, tmp_path / "part", "--resume") == 0
    assert sha(tmp_path / "full" / "history.csv") == sha(tmp_path / "part" / "history.csv")


def test_eval_rows_summary_and_determinism(envdir, tmp_path, capsys):
    args = ["eval", "--bundles", str(envdir), "--seeds-per-env", "3", "--seed", "2"]
    assert main(args + ["--out", str(tmp_path / "a.csv")] + Q) == 0
    assert main(args + ["--out", str(tmp_path / "b.csv"), "--jobs", "2", "--quiet"]) == 0
    assert sha(tmp_path / "a.csv") == sha(tmp_path / "b.csv")
    rows = read_metrics_csv(tmp_path / "a.csv")
    assert len(rows) == 2 * 3 * 3
    summary = (tmp_path / "a.summary.csv").read_text()
    assert "success_rate" in summary
    capsys.readouterr()
    assert main(["table", str(tmp_path / "a.csv"), str(tmp_path / "b.csv")]) == 0
    assert capsys.readouterr().out.count("pso:manual") == 2


def test_single_run_aggregate(envdir, tmp_path):
    path = next(envdir.glob("*.gdm"))
    assert main(["eval", "--bundles", str(path), "--seeds-per-env", "1", "--out", str(tmp_path / "m.csv")]
                + Q) == 0
    row = list(csv.DictReader(ln for ln in (tmp_path / "m.summary.csv").read_text().splitlines()
                              if not ln.startswith("#")))[0]
    seed = int(read_metrics_csv(tmp_path / "m.csv")[0]["seed"])
    run = run_episode(load_bundle(path), "pso", MANUAL, seed)
    assert float(row["success_rate"]) == float(run.success)
    assert float(row["mean_time"]) == pytest.approx(float(np.mean(run.time_to_source)), abs=1e-12)


def test_replay_svg_and_hash(envdir, tmp_path):
    path = next(envdir.glob("*.gdm"))
    metrics = tmp_path / "m.csv"
    assert main(["eval", "--bundles", str(path), "--seeds-per-env", "2", "--out", str(metrics)] + Q) == 0
    svg = tmp_path / "r.svg"
    events = tmp_path / "ev.csv"
    assert main(["replay", "--bundle", str(path), "--metrics", str(metrics), "--events", str(events),
                 "--out", str(svg), "--quiet"]) == 0
    text = svg.read_text()
    assert text.count('<polyline class="agent"') == 3
    recorded = read_metrics_csv(metrics)[0]["trajectory_hash"]
    assert f"trajectory sha256 {recorded}" in text
    assert "waypoint" in events.read_text()
    # a different genome cannot reproduce the recorded run
    assert main(["replay", "--bundle", str(path), "--metrics", str(metrics), "--genome", "evolved",
                 "--out", str(tmp_path / "x.svg"), "--quiet"]) == 2
    assert main(["replay", "--bundle", str(tmp_path / "none.gdm"), "--run-seed", "1",
                 "--out", str(tmp_path / "y.svg"), "--quiet"]) == 2
    assert main(["replay", "--bundle", str(path), "--out", str(tmp_path / "z.svg"), "--quiet"]) == 1


def test_empty_arena_replay_and_crash_marker(empty_bundle):
    run = run_episode(empty_bundle, "pso", MANUAL, 0)
    svg = render_svg(empty_bundle, run)
    assert svg.count("<polyline") == 3 and "<line" in svg
    spawn = np.array([[5.0, 2.0], [5.3, 2.0], [2.0, 8.0]])    # first two agents start too close
    crashed = run_episode(empty_bundle, "pso", MANUAL, 0, spawn=spawn)
    assert crashed.crashed.tolist() == [True, True, False]
    assert svg.count('class="crash"') == 0
    svg = render_svg(empty_bundle, crashed)
    i = int(np.flatnonzero(crashed.crashed)[0])
    x, y = crashed.trajectory[-1, i]
    marker = re.search(rf'<path class="crash" data-agent="{i}"[^>]*d="M([-\d.]+),([-\d.]+)', svg)
    assert marker is not None
    cx, cy = float(marker.group(1)) + 6.0, float(marker.group(2)) + 6.0
    assert cx == pytest.approx(10 + x * 50, abs=1e-2)
    assert cy == pytest.approx(10 + (empty_bundle.env.height - y) * 50, abs=1e-2)
