"""Simulate a window, analyse the trace and benchmark the pool, all through the CLI.

    python3 demos/pipeline.py [out_dir]

Outputs land in ``out_dir`` (default ``demo_out/``): the trace, the analyser
report and one benchmark CSV per cost setting.
"""

import json
import sys
from pathlib import Path

from tfmm_lab.cli import main

here = Path(__file__).parent
out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
cfg = str(here / "july_window.yaml")

assert main(["simulate", "--config", cfg, "--out", str(out / "sim")]) == 0
assert main(["analyze", "--trace", str(out / "sim" / "trace.csv"), "--out", str(out / "report")]) == 0
assert main(["benchmark", "--config", cfg, "--trace", str(out / "sim" / "trace.csv"), "--out", str(out / "bench")]) == 0

report = json.loads((out / "report" / "report.json").read_text())
total = report["n_trades"] + report["n_excluded"]
print(f"{total} trades over {report['n_blocks']} blocks, {report['n_excluded']} price-driven ones left out of the ratios")
print(f"labels: {report['label_counts']}")
print(f"efficiency ratio {report['efficiency_ratio']:.3f}, "
      f"{report['fraction_below_threshold']:.0%} of trades below the standalone threshold")
for entry in json.loads((out / "bench" / "benchmark_index.json").read_text()):
    last = (out / "bench" / entry["file"]).read_text().splitlines()[-1].split(",")
    print(f"{entry['file']}: pool vs LVR {float(last[4]):+.4f} pp, vs RVR {float(last[5]):+.4f} pp")
