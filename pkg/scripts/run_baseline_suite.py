#!/usr/bin/env python3
"""Run every geometric baseline over a manifest and print a CD/EMD table.

Example:
    python3 scripts/make_synthetic_dataset.py --out /tmp/demo
    python3 scripts/run_baseline_suite.py --manifest /tmp/demo/manifest.json \
        --past 3 --horizon 3 --out /tmp/demo/results
"""

import argparse
import json
from pathlib import Path

from pcforecast.cli import main as cli_main
from pcforecast.manifest import load_manifest


def run(argv) -> None:
    code = cli_main([str(a) for a in argv])
    if code != 0:
        raise SystemExit(code)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--manifest", required=True)
    parser.add_argument("--past", type=int, default=3)
    parser.add_argument("--horizon", type=int, default=3)
    parser.add_argument("--emd-samples", type=int, default=256)
    parser.add_argument("--methods", default="identity,ego_warp,icp_warp")
    parser.add_argument("--out", required=True)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    methods = args.methods.split(",")
    mani = load_manifest(args.manifest)

    forecast_dir = out / "forecasts"
    for seq_id in mani.sequence_ids:
        argv = ["forecast", "--manifest", args.manifest, "--seq", seq_id,
                "--past", args.past, "--horizon", args.horizon,
                "--out", forecast_dir]
        for method in methods:
            argv += ["--method", method]
        run(argv)

    report_path = out / "spf_report.json"
    run(["eval-spf", "--manifest", args.manifest, "--forecasts", forecast_dir,
         "--emd-samples", args.emd_samples, "--out", report_path])

    report = json.loads(report_path.read_text())
    print(f"\n{'method':<12} {'CD':>12} {'CD/point':>12} {'EMD':>12}")
    for method, body in sorted(report["methods"].items()):
        mean = body["mean"]
        print(f"{method:<12} {mean['cd']:>12.4f} "
              f"{mean['cd_normalized']:>12.6f} {mean['emd']:>12.4f}")
    print(f"\nfull report: {report_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
