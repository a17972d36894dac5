"""Run every config under configs/ and collect plot data.

    python scripts/run_all.py [--out results] [--workers 2]
"""

import argparse
from pathlib import Path

from hjblab.harness import emit_plot_data, load_config, run

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(ROOT / "results"))
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()
    out = Path(args.out)
    for path in sorted((ROOT / "configs").glob("*.toml")):
        cfg = load_config(path)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        cfg.workers = args.workers
        res = run(cfg, out / cfg.name)
        print(f"{cfg.name:24s} {res.manifest['wall_time_s']:7.1f}s  -> {res.out_dir}")
    print("plot data:", emit_plot_data(out))


if __name__ == "__main__":
    main()
