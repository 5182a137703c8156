"""Compare the compiled core against the pure-Python fallback.

Times full episodes for every policy and one filament gas simulation on the
same bundle, checks that both backends produce the same trajectory hashes,
and prints a speed-up table.

    python3 benchmarks/bench_backends.py --episodes 3
"""

from __future__ import annotations

import argparse
import os
import time

from sniffy import _backend
from sniffy.environment import FloorplanConfig, build_bundle, simulate_filaments
from sniffy.genome import MANUAL
from sniffy.sim import run_episode


def timed(fn, repeat: int) -> tuple[float, object]:
    out = None
    t0 = time.perf_counter()
    for _ in range(repeat):
        out = fn()
    return (time.perf_counter() - t0) / repeat, out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--episodes", type=int, default=3, help="episodes per policy and backend")
    ap.add_argument("--seed", type=int, default=11, help="environment seed")
    args = ap.parse_args()
    if not _backend.native_available():
        raise SystemExit("compiled core not built; run `pip install -e . --no-build-isolation` first")

    bundle = build_bundle(args.seed, FloorplanConfig(room_count=2, obstacles=1))
    rows = []
    for policy in ("pso", "chemotaxis", "anemotaxis"):
        times, hashes = {}, {}
        for backend in ("native", "python"):
            def episodes():
                return [run_episode(bundle, policy, MANUAL, s, backend=backend, record_events=False).trajectory_hash
                        for s in range(args.episodes)]
            times[backend], hashes[backend] = timed(episodes, 1)
        rows.append((f"episode/{policy}", times["native"] / args.episodes, times["python"] / args.episodes,
                     hashes["native"] == hashes["python"]))

    gas = {}
    for backend in ("native", "python"):
        os.environ["SNIFFY_BACKEND"] = backend
        gas[backend] = timed(lambda: simulate_filaments(bundle.env, bundle.flow, duration=30.0, seed=1), 1)
    os.environ.pop("SNIFFY_BACKEND")
    same = gas["native"][1].mass_log.live.tolist() == gas["python"][1].mass_log.live.tolist()
    rows.append(("filaments/30s", gas["native"][0], gas["python"][0], same))

    print(f"{'kernel':<22} {'native [s]':>11} {'python [s]':>11} {'speed-up':>9}  match")
    for name, tn, tp, ok in rows:
        print(f"{name:<22} {tn:>11.4f} {tp:>11.4f} {tp / tn:>8.1f}x  {'yes' if ok else 'NO'}")


if __name__ == "__main__":
    main()
