"""Command line entry point: ``sniffy gen-env | evolve | eval | replay | table``.

Exit codes: 0 success, 1 usage error, 2 data error.  Every output file
starts with ``#`` header lines that record the root seed and the settings
needed to reproduce it.  The root seed comes from ``--seed``, then the
``SNIFFY_SEED`` environment variable, then 0.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import os
import sys
from dataclasses import asdict, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from sniffy import _backend
from sniffy.environment import (
    Bundle,
    BundleError,
    FloorplanConfig,
    GenerationError,
    OccupancyError,
    build_bundle,
    bundle_for,
    load_bundle,
    load_occupancy_image,
    read_occupancy,
    save_bundle,
)
from sniffy.evolution import EvoConfig, EvoError, evolve, history_csv, parse_config_text
from sniffy.genome import NAMES, Genome, GenomeError, load_preset
from sniffy.sim import (
    POLICY_CODES,
    SimConfig,
    events_csv,
    format_float,
    metrics_csv,
    read_metrics_csv,
    run_batch,
    run_episode,
    summarize,
    summarize_rows,
)
from sniffy.svg import render_svg

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
MANIFEST = "manifest.csv"
GEN_SALT = 0x6E76
EVAL_SALT = 0xE7A1


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits with 2 by default; usage errors are 1 here
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# shared helpers


def root_seed(flag: Optional[int]) -> int:
    if flag is not None:
        return flag
    env = os.environ.get("SNIFFY_SEED")
    if env is None or env.strip() == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"SNIFFY_SEED is not an integer: {env!r}") from None


def default_jobs() -> int:
    return os.cpu_count() or 1


def header_text(command: str, items: Sequence[tuple[str, object]]) -> str:
    return "\n".join([f"sniffy {command}"] + [f"{k}: {v}" for k, v in items])


def read_header(path: Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for line in path.read_text().splitlines():
        if not line.startswith("#"):
            break
        body = line[1:].strip()
        if ": " in body:
            k, v = body.split(": ", 1)
            out[k] = v
    return out


def parse_range(text: str, name: str) -> tuple[int, int]:
    try:
        if ":" in text:
            lo, hi = (int(p) for p in text.split(":", 1))
        else:
            lo = hi = int(text)
    except ValueError:
        raise UsageError(f"--{name} expects N or LO:HI, got {text!r}") from None
    if lo < 0 or hi < lo:
        raise UsageError(f"--{name}: need 0 <= LO <= HI, got {text!r}")
    return lo, hi


def sim_config(pairs: Sequence[str]) -> SimConfig:
    known = {f.name: f for f in fields(SimConfig)}
    kwargs = {}
    for pair in pairs:
        if "=" not in pair:
            raise UsageError(f"--sim expects KEY=VALUE, got {pair!r}")
        key, value = (s.strip() for s in pair.split("=", 1))
        if key not in known:
            raise UsageError(f"unknown sim key: {key}")
        kind = type(getattr(SimConfig, key))
        try:
            kwargs[key] = kind(value)
        except ValueError:
            raise UsageError(f"bad value for {key}: {value!r}") from None
    try:
        return SimConfig(**kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def sim_text(config: SimConfig) -> str:
    return ",".join(f"{k}={format_float(v) if isinstance(v, float) else v}" for k, v in asdict(config).items())


def sim_from_text(text: str) -> SimConfig:
    return sim_config([p for p in text.split(",") if p])


def genome_text(g: Genome) -> str:
    return ",".join(f"{n}={format_float(getattr(g, n))}" for n in NAMES)


def genome_from_text(text: str) -> Genome:
    return Genome.from_text("\n".join(text.split(",")))


def load_genome(name: str) -> Genome:
    try:
        return load_preset(name)
    except FileNotFoundError:
        raise DataError(f"genome preset not found: {name}") from None
    except GenomeError as exc:
        raise DataError(f"bad genome preset {name}: {exc}") from None


def bundle_paths(specs: Sequence[str]) -> list[Path]:
    """Directories expand to their manifest order (or sorted ``*.gdm``); files are kept as given."""
    out: list[Path] = []
    for spec in specs:
        p = Path(spec)
        if p.is_dir():
            manifest = p / MANIFEST
            if manifest.exists():
                rows = list(csv.DictReader(ln for ln in manifest.read_text().splitlines()
                                           if not ln.startswith("#")))
                out.extend(p / r["file"] for r in rows)
            else:
                found = sorted(p.glob("*.gdm"))
                if not found:
                    raise DataError(f"no bundles in {p}")
                out.extend(found)
        elif p.exists():
            out.append(p)
        else:
            raise DataError(f"bundle path does not exist: {p}")
    if not out:
        raise DataError("no bundles given")
    return out


def load_bundles(specs: Sequence[str]) -> list[Bundle]:
    bundles = []
    for path in bundle_paths(specs):
        try:
            bundles.append(load_bundle(path))
        except FileNotFoundError:
            raise DataError(f"bundle path does not exist: {path}") from None
        except (BundleError, OSError, ValueError) as exc:
            raise DataError(f"cannot read bundle {path}: {exc}") from None
    return bundles


def eval_seeds(root: int, n_envs: int, per_env: int) -> np.ndarray:
    """Spawn seeds for evaluation; the same root seed gives every policy the same starts."""
    return np.random.default_rng([root, EVAL_SALT]).integers(0, 2**31 - 1, size=(n_envs, per_env))


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# --------------------------------------------------------------------------
# gen-env


def _gen_one(job: tuple[int, int, int, float, float]) -> tuple[int, Optional[Bundle], str]:
    seed, rooms, obstacles, size, spawn_distance = job
    cfg = FloorplanConfig(width=size, height=size, room_count=rooms, obstacles=obstacles,
                          spawn_distance=spawn_distance)
    try:
        return seed, build_bundle(seed, cfg), ""
    except (GenerationError, ValueError) as exc:
        return seed, None, str(exc)


def cmd_gen_env(args) -> int:
    root = root_seed(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows: list[dict] = []
    if args.image:
        try:
            grid = read_occupancy(args.image)
            env = load_occupancy_image(grid, args.cell_size, seed=root, env_id=f"img-{root}")
        except (OSError, OccupancyError, ValueError) as exc:
            raise DataError(f"cannot use occupancy image {args.image}: {exc}") from None
        bundle = bundle_for(env, root)
        name = f"{env.id}.gdm"
        save_bundle(bundle, out / name)
        rows.append({"id": env.id, "file": name, "seed": root, "rooms": "", "obstacles": ""})
    else:
        if args.count < 1:
            raise UsageError("--count must be >= 1")
        if args.size < 4.0:
            raise UsageError("--size must be at least 4 m")
        rooms = parse_range(args.rooms, "rooms")
        obstacles = parse_range(args.obstacles, "obstacles")
        rng = np.random.default_rng([root, GEN_SALT])
        attempts = 0
        while len(rows) < args.count:
            need = args.count - len(rows)
            batch = []
            for _ in range(need):
                batch.append((int(rng.integers(0, 2**31 - 1)), int(rng.integers(rooms[0], rooms[1] + 1)),
                              int(rng.integers(obstacles[0], obstacles[1] + 1)), float(args.size),
                              float(args.spawn_distance)))
            attempts += len(batch)
            if attempts > 20 * args.count:
                raise DataError("too many rejected environment seeds; relax --rooms/--obstacles")
            for seed, bundle, err in _map(_gen_one, batch, args.jobs):
                if bundle is None:
                    print(f"seed {seed} rejected: {err}", file=sys.stderr)
                    continue
                name = f"{bundle.env.id}.gdm"
                save_bundle(bundle, out / name)
                job = next(b for b in batch if b[0] == seed)
                rows.append({"id": bundle.env.id, "file": name, "seed": seed, "rooms": job[1],
                             "obstacles": job[2]})
                if not args.quiet:
                    print(f"{name}", file=sys.stderr)
    buf = io.StringIO()
    buf.write("# " + header_text("gen-env", [
        ("root_seed", root), ("count", len(rows)), ("size", format_float(args.size)),
        ("rooms", args.rooms), ("obstacles", args.obstacles),
        ("spawn_distance", format_float(args.spawn_distance)),
    ]).replace("\n", "\n# ") + "\n")
    w = csv.DictWriter(buf, fieldnames=["id", "file", "seed", "rooms", "obstacles", "sha256"], lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({**r, "sha256": sha256_file(out / r["file"])})
    write_text(out / MANIFEST, buf.getvalue())
    print(f"wrote {len(rows)} bundles and {out / MANIFEST}")
    return EXIT_OK


def _map(fn, items: list, jobs: int) -> list:
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# evolve


def evo_config(args, root: int) -> EvoConfig:
    values: dict[str, object] = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise DataError(f"config file does not exist: {path}")
        values.update(parse_config_text(path.read_text()))
    for pair in args.set or []:
        if "=" not in pair:
            raise UsageError(f"--set expects KEY=VALUE, got {pair!r}")
        k, v = (s.strip() for s in pair.split("=", 1))
        values[k] = v
    if args.doping is not None:
        values["doping"] = args.doping
    if args.generations is not None:
        values["generations"] = args.generations
    if args.population is not None:
        values["population"] = args.population
    if args.seed is not None or "seed" not in values:
        values["seed"] = root
    return EvoConfig.from_mapping(values)


def cmd_evolve(args) -> int:
    root = root_seed(args.seed)
    try:
        config = evo_config(args, root)
    except EvoError as exc:
        raise UsageError(str(exc)) from None
    sim = sim_config(args.sim or [])
    bundles = load_bundles(args.bundles)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    checkpoint = out / "checkpoint.json"

    def progress(rec) -> None:
        if not args.quiet:
            print(f"gen {rec.generation:4d} best {rec.best_cost:.4f} median {rec.median_cost:.4f}",
                  file=sys.stderr)

    try:
        result = evolve(config, bundles, sim, jobs=args.jobs, checkpoint=checkpoint, resume=args.resume,
                        stop_after=args.stop_after, progress=progress)
    except EvoError as exc:
        raise DataError(str(exc)) from None
    if result is None:
        print(f"stopped after generation {args.stop_after}; resume with --resume")
        return EXIT_OK
    header = header_text("evolve", [
        ("root_seed", config.seed),
        ("config", ",".join(f"{k}={v}" for k, v in asdict(config).items())),
        ("sim", sim_text(sim)),
        ("bundles", ",".join(b.id for b in bundles)),
    ])
    write_text(out / "history.csv", history_csv(result.history, header))
    write_text(out / "best.txt", "".join(f"# {ln}\n" for ln in header.splitlines())
               + f"# training cost: {format_float(result.best_cost)}\n" + result.best.to_text())
    print(f"best training cost {result.best_cost:.4f}; wrote {out / 'best.txt'} and {out / 'history.csv'}")
    return EXIT_OK


# --------------------------------------------------------------------------
# eval


SUMMARY_FIELDS = ["label", "policy", "genome", "runs", "success_rate", "mean_distance", "mean_time", "crash_rate"]


def summary_table(rows: Sequence[dict]) -> str:
    lines = [f"{'label':<24} {'runs':>5} {'success':>8} {'distance':>9} {'time':>8} {'crash':>7}"]
    for r in rows:
        lines.append(f"{r['label']:<24} {int(r['runs']):>5} {float(r['success_rate']):>8.3f} "
                     f"{float(r['mean_distance']):>9.3f} {float(r['mean_time']):>8.2f} "
                     f"{float(r['crash_rate']):>7.3f}")
    return "\n".join(lines)


def cmd_eval(args) -> int:
    root = root_seed(args.seed)
    if args.policy not in POLICY_CODES:
        raise UsageError(f"unknown policy {args.policy!r}; choose from {', '.join(POLICY_CODES)}")
    if args.seeds_per_env < 1:
        raise UsageError("--seeds-per-env must be >= 1")
    sim = sim_config(args.sim or [])
    genome = load_genome(args.genome)
    bundles = load_bundles(args.bundles)
    seeds = eval_seeds(root, len(bundles), args.seeds_per_env)
    runs = run_batch(bundles, args.policy, genome, seeds, sim, jobs=args.jobs)
    label = args.label or f"{args.policy}:{Path(args.genome).stem}"
    header = header_text("eval", [
        ("root_seed", root), ("label", label), ("policy", args.policy), ("genome", args.genome),
        ("genome_values", genome_text(genome)), ("seeds_per_env", args.seeds_per_env),
        ("sim", sim_text(sim)), ("bundles", ",".join(b.id for b in bundles)),
    ])
    out = Path(args.out)
    write_text(out, metrics_csv(runs, header))
    s = summarize(runs)
    row = {"label": label, "policy": args.policy, "genome": args.genome, "runs": s.runs,
           "success_rate": format_float(s.success_rate), "mean_distance": format_float(s.mean_distance),
           "mean_time": format_float(s.mean_time), "crash_rate": format_float(s.crash_rate)}
    summary_path = Path(args.summary) if args.summary else out.with_suffix(".summary.csv")
    buf = io.StringIO()
    buf.write("".join(f"# {ln}\n" for ln in header.splitlines()))
    w = csv.DictWriter(buf, fieldnames=SUMMARY_FIELDS, lineterminator="\n")
    w.writeheader()
    w.writerow(row)
    write_text(summary_path, buf.getvalue())
    print(summary_table([row]))
    return EXIT_OK


def cmd_table(args) -> int:
    rows = []
    for spec in args.metrics:
        path = Path(spec)
        if not path.exists():
            raise DataError(f"metrics file does not exist: {path}")
        head = read_header(path)
        s = summarize_rows(read_metrics_csv(path))
        rows.append({"label": head.get("label", path.stem), "runs": s.runs, "success_rate": s.success_rate,
                     "mean_distance": s.mean_distance, "mean_time": s.mean_time, "crash_rate": s.crash_rate})
    print(summary_table(rows))
    return EXIT_OK


# --------------------------------------------------------------------------
# replay


def cmd_replay(args) -> int:
    try:
        bundle = load_bundle(args.bundle)
    except FileNotFoundError:
        raise DataError(f"bundle path does not exist: {args.bundle}") from None
    except (BundleError, OSError, ValueError) as exc:
        raise DataError(f"cannot read bundle {args.bundle}: {exc}") from None
    policy, seed, genome, sim, expected = args.policy, args.run_seed, None, None, None
    if args.metrics:
        path = Path(args.metrics)
        if not path.exists():
            raise DataError(f"metrics file does not exist: {path}")
        head = read_header(path)
        rows = [r for r in read_metrics_csv(path) if r["env_id"] == bundle.env.id]
        if seed is not None:
            rows = [r for r in rows if int(r["seed"]) == seed]
        if not rows:
            raise DataError(f"no run for {bundle.env.id} in {path}")
        row = rows[0]
        seed, policy, expected = int(row["seed"]), row["policy"], row["trajectory_hash"]
        if "genome_values" in head and args.genome is None:
            genome = genome_from_text(head["genome_values"])
        if "sim" in head and not args.sim:
            sim = sim_from_text(head["sim"])
    if seed is None:
        raise UsageError("replay needs --metrics or --run-seed")
    if policy is None:
        policy = "pso"
    if policy not in POLICY_CODES:
        raise UsageError(f"unknown policy {policy!r}")
    if genome is None:
        genome = load_genome(args.genome or "manual")
    if sim is None:
        sim = sim_config(args.sim or [])
    run = run_episode(bundle, policy, genome, seed, sim)
    if expected is not None and run.trajectory_hash != expected:
        raise DataError(f"trajectory hash mismatch for {bundle.env.id} seed {seed}: recorded {expected[:12]}, "
                        f"replayed {run.trajectory_hash[:12]} (wrong genome, bundle or settings?)")
    write_text(Path(args.out), render_svg(bundle, run, sim.success_radius))
    if args.events:
        write_text(Path(args.events), events_csv(run.events))
    print(f"{bundle.env.id} seed {seed}: cost {run.mean_cost:.4f} success {int(run.success)} "
          f"hash {run.trajectory_hash[:12]}; wrote {args.out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sniffy", description="Gas-seeking swarm lab: environments, evolution, evaluation.")
    p.add_argument("--backend", choices=["auto", "native", "python"], default="auto",
                   help="simulation kernels (default: compiled core when available)")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, jobs=True):
        sp.add_argument("--seed", type=int, default=None, help="root seed (fallback: $SNIFFY_SEED, then 0)")
        if jobs:
            sp.add_argument("--jobs", type=int, default=default_jobs(), help="worker processes (default: cores)")
        sp.add_argument("--quiet", action="store_true", help="suppress progress output")

    g = sub.add_parser("gen-env", help="generate environment bundles and a manifest")
    g.add_argument("--count", type=int, default=20, help="number of environments")
    g.add_argument("--size", type=float, default=10.0, help="square arena side [m]")
    g.add_argument("--rooms", default="1:4", help="room count N or range LO:HI")
    g.add_argument("--obstacles", default="0:2", help="obstacle count N or range LO:HI")
    g.add_argument("--spawn-distance", type=float, default=FloorplanConfig.spawn_distance,
                   help="preferred distance from the spawn centre to the source [m]")
    g.add_argument("--image", default=None, help="build one bundle from an occupancy image (PGM or 0/1 text)")
    g.add_argument("--cell-size", type=float, default=0.1, help="occupancy image cell size [m]")
    g.add_argument("--out", required=True, help="output directory")
    common(g)
    g.set_defaults(func=cmd_gen_env)

    e = sub.add_parser("evolve", help="evolve controller parameters")
    e.add_argument("--bundles", nargs="+", required=True, help="bundle files or directories")
    e.add_argument("--config", default=None, help="key=value config file")
    e.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    e.add_argument("--doping", choices=["on", "off"], default=None, help="difficulty-weighted env sampling")
    e.add_argument("--generations", type=int, default=None)
    e.add_argument("--population", type=int, default=None)
    e.add_argument("--sim", action="append", metavar="KEY=VALUE", help="override one simulation setting")
    e.add_argument("--resume", action="store_true", help="continue from OUT/checkpoint.json")
    e.add_argument("--stop-after", type=int, default=None, help="halt after this many generations")
    e.add_argument("--out", required=True, help="output directory")
    common(e)
    e.set_defaults(func=cmd_evolve)

    v = sub.add_parser("eval", help="evaluate a policy on bundles")
    v.add_argument("--policy", default="pso", help="pso, chemotaxis or anemotaxis")
    v.add_argument("--genome", default="manual", help="preset name (manual, evolved) or preset file")
    v.add_argument("--bundles", nargs="+", required=True, help="bundle files or directories")
    v.add_argument("--seeds-per-env", type=int, default=10)
    v.add_argument("--label", default=None, help="row label in summaries")
    v.add_argument("--sim", action="append", metavar="KEY=VALUE", help="override one simulation setting")
    v.add_argument("--out", required=True, help="metrics CSV path")
    v.add_argument("--summary", default=None, help="summary CSV path (default: next to --out)")
    common(v)
    v.set_defaults(func=cmd_eval)

    r = sub.add_parser("replay", help="re-run one episode and draw it as SVG")
    r.add_argument("--bundle", required=True)
    r.add_argument("--metrics", default=None, help="metrics CSV holding the run to replay")
    r.add_argument("--run-seed", type=int, default=None, help="episode seed (selects the row with --metrics)")
    r.add_argument("--policy", default=None)
    r.add_argument("--genome", default=None, help="preset name or file (default: from the metrics header)")
    r.add_argument("--sim", action="append", metavar="KEY=VALUE", help="override one simulation setting")
    r.add_argument("--events", default=None, help="also write the waypoint/mode event log as CSV")
    r.add_argument("--out", required=True, help="SVG path")
    common(r, jobs=False)
    r.set_defaults(func=cmd_replay)

    t = sub.add_parser("table", help="comparison table from metrics CSVs")
    t.add_argument("metrics", nargs="+")
    t.set_defaults(func=cmd_table)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    if args.backend != "auto":
        if args.backend == "native" and not _backend.native_available():
            print("sniffy: error: compiled core is not built", file=sys.stderr)
            return EXIT_USAGE
        os.environ["SNIFFY_BACKEND"] = args.backend  # inherited by worker processes
    if getattr(args, "jobs", 1) < 1:
        print("sniffy: error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"sniffy: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"sniffy: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
