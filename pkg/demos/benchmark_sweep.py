"""
The full diagnostic sweep
=========================

Runs the bundled benchmark (every epsilon and seed), prints the table and
the per-branch Spearman correlations. Pass a config path to run another.
"""

import sys
import time
from pathlib import Path

from dprgmi import workflow

path = sys.argv[1] if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "configs" / "benchmark.json"
cfg = workflow.SweepConfig.load(path)
print(f"{cfg.name}: {len(cfg.epsilons)} privacy levels x {len(cfg.seeds)} seeds x {len(cfg.branches)} branch(es)")

t0 = time.perf_counter()
profile = workflow.run_sweep(cfg, progress=lambda r: print(".", end="", flush=True))
print(f" done in {time.perf_counter() - t0:.0f}s\n")

print(workflow.render_table(profile))
print()
print(workflow.render_correlations(workflow.correlate([profile])))

workflow.write_report(profile, "benchmark_report.json")
print("\nreport written to benchmark_report.json")
