"""How the capacity c and the radius R shape the outcome.

Runs a small grid over c in 1..4 for a few seeds and prints utilisation,
exchanged data and regional access side by side. Emergency vehicles carry
more data and rank partners with more regional data higher, which shows up
once vehicles may hold several links at once.

    python demos/02_capacity_sweep.py [seeds]
"""
import sys

from mmv2v import EngineConfig, UtilityWeights, metrics, run_scenario
from mmv2v.engine import default_world

seeds = range(int(sys.argv[1]) if len(sys.argv) > 1 else 3)
worlds = {s: default_world(s) for s in seeds}

for radius in (20.0, 40.0):
    print(f"R = {radius:g} m")
    print("   c  util(all)  exch e/all  access e-CAV  access all")
    for c in (1, 2, 3, 4):
        cfg = EngineConfig(capacity=c, weights=UtilityWeights(radius=radius))
        runs = [run_scenario(worlds[s], cfg, s) for s in seeds]
        util = metrics.seed_mean(runs, metrics.average_utilisation)
        ratio = (metrics.seed_mean(runs, metrics.average_exchanged, "emergency")
                 / metrics.seed_mean(runs, metrics.average_exchanged, "all"))
        acc_e = metrics.seed_mean(runs, metrics.average_regional_access, "emergency")
        acc_a = metrics.seed_mean(runs, metrics.average_regional_access, "all")
        print(f"  {c:2d}  {util:9.3f}  {ratio:10.2f}  {acc_e:12.2f}  {acc_a:10.2f}")
    print()
