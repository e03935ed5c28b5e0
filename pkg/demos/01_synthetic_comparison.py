"""Compare the five algorithms on the 25-agent synthetic classification task.

Each tuned preset runs for ``--iters`` iterations. Combined plots against the
float count land in ``--out``, together with a summary table. The full
3000-iteration run takes a few minutes; pass ``--iters 300`` for a quick look.

    python3 demos/01_synthetic_comparison.py --iters 300 --out runs/demo1
"""

import argparse

from docom import parse_config, run_sweep

PRESETS = ["syn-linear-docom", "syn-linear-choco", "syn-linear-gnsd", "syn-linear-gt_hsgd", "syn-linear-dsgd"]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--iters", type=int, default=3000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=3)
    ap.add_argument("--out", default="runs/demo1")
    args = ap.parse_args()

    configs = [parse_config(preset=p, overrides={"iters": args.iters, "seed": args.seed}) for p in PRESETS]
    results = run_sweep(configs, args.out, max_workers=args.jobs, x_axis="floats")

    print(f"{'run':<22}{'floats':>14}{'worst loss':>12}{'consensus gap':>16}{'grad norm^2':>14}")
    for r in results:
        if not r.ok:
            print(f"{r.label:<22} {r.status}: {r.error}")
            continue
        last = r.records[-1]
        print(f"{r.label:<22}{last.floats_values_only:>14}{last.worst_loss:>12.4f}"
              f"{last.consensus_gap:>16.3e}{last.grad_norm_sq:>14.3e}")
    print(f"plots: {args.out}/combined_*.svg")


if __name__ == "__main__":
    main()
