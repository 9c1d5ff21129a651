#!/usr/bin/env python3
"""Run the turnaround-vs-load experiment on the built-in five-host fleet
and print the curve plus segment slopes.

Usage: python scripts/run_experiment.py [requests] [out.csv]
"""

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from vitl.simulate import (  # noqa: E402
    ExperimentConfig,
    emit_curve,
    points_to_csv,
    run_experiment,
    summarize_curve,
)


def main() -> int:
    requests = int(sys.argv[1]) if len(sys.argv) > 1 else 23
    points = run_experiment(ExperimentConfig(request_count=requests))
    if len(sys.argv) > 2:
        out = emit_curve(points, "csv", sys.argv[2])
        print(f"wrote {out}")
    else:
        sys.stdout.write(points_to_csv(points))
    print(json.dumps(summarize_curve(points), indent=2), file=sys.stderr)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
