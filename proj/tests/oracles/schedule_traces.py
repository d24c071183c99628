"""Writes tests/data/schedule_traces.json: random validation-metric sequences
and the lr / stop trace expected from the plateau schedule."""
import json
import random
import sys


def simulate(metrics, lr0=1e-4, plateau=3, factor=0.5, early=10, thresh=1e-6):
    lr, best, stale, flat = lr0, float("-inf"), 0, 0
    out = []
    for m in metrics:
        if m - best >= thresh:
            best, stale, flat = m, 0, 0
        else:
            stale += 1
            flat += 1
            if flat >= plateau:
                lr *= factor
                flat = 0
        stop = stale >= early
        out.append({"lr": lr, "best": best, "stale": stale, "stop": stop})
        if stop:
            break
    return out


def main(path):
    rng = random.Random(2024)
    traces = []
    for i in range(20):
        n = rng.randint(5, 40)
        kind = i % 4
        if kind == 0:
            metrics = [round(rng.uniform(0.5, 0.9), 4) for _ in range(n)]
        elif kind == 1:
            metrics = [0.5] * n
        elif kind == 2:
            base = 0.6
            metrics = []
            for _ in range(n):
                base += rng.choice([0.0, 0.0, 0.0, 0.01, 5e-7])
                metrics.append(round(base, 7))
        else:
            metrics = sorted(round(rng.uniform(0.3, 0.95), 4) for _ in range(n // 2))
            metrics += [metrics[-1] - 0.01] * (n - n // 2)
        traces.append({"metrics": metrics, "expected": simulate(metrics)})
    with open(path, "w") as f:
        json.dump({"initial_lr": 1e-4, "plateau_patience": 3, "lr_factor": 0.5,
                   "early_stop_patience": 10, "improvement_threshold": 1e-6,
                   "traces": traces}, f, indent=1)


if __name__ == "__main__":
    main(sys.argv[1])
