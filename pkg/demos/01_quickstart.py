"""Quickstart: simulate one street grid and look at what the association achieves.

Twenty vehicles drive a 3x3 Manhattan grid for 300 timeslots. Every timeslot each
vehicle ranks its line-of-sight neighbours, a stable-fixtures matching pairs them
up to their capacity, and the links are scheduled half-duplex.

    python demos/01_quickstart.py
"""
from mmv2v import EngineConfig, UtilityWeights, metrics, run_scenario
from mmv2v.engine import default_world

SEED = 3

world = default_world(SEED)
result = run_scenario(world, EngineConfig(capacity=3, weights=UtilityWeights(radius=20.0)), SEED)
print(f"{len(result)} timeslots simulated, config hash {result.metadata['config_hash']}")

# One timeslot up close: who talks to whom, and how the airtime is split.
rep = result.reports[150]
print(f"\ntimeslot {rep.t}: {len(rep.matching)} links in {rep.schedule.slot_count} sub-slots")
for v in rep.vehicles:
    if v.partners:
        print(f"  vehicle {v.id:2d} ({v.kind.value}) -> {sorted(v.partners)}"
              f"  utilisation {v.utilisation:.2f}")

# Aggregates over the whole run, split by vehicle class.
print()
for kind in metrics.FILTERS:
    u = metrics.average_utilisation(result, kind)
    d = metrics.average_exchanged(result, kind)
    print(f"{kind:9s} mean utilisation {u:.3f}  exchanged {d:.3f} Gbit/timeslot")

cdf = metrics.link_utilisation_cdf(result)
print(f"\nshare of vehicle-timeslots with utilisation <= 0.5: {cdf(0.5):.2f}")
