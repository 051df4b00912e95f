"""
Initialization matters
======================

Two branches share the same downstream task: one starts from a random
init, the other from a network pretrained (non-privately) on a related
source task. Each branch keeps its own phi_0, so displacement is measured
in that branch's coordinate system.
"""

from pathlib import Path

from dprgmi import workflow

cfg = workflow.SweepConfig.load(Path(__file__).resolve().parents[1] / "configs" / "two_branch.json")
profile = workflow.run_sweep(cfg)
print(workflow.render_table(profile))
print()

# private records only, grouped per branch plus an overall row
print(workflow.render_correlations(workflow.correlate([profile])))
