"""The matching solver on its own, away from radios and roads.

Builds a few preference instances by hand, solves them, and compares the
result with the exhaustive oracle that enumerates every stable matching.
Ends with a randomised soundness check like the `mmv2v verify` command.

    python demos/03_matching_by_hand.py
"""
from mmv2v.matching import SfInstance, brute_force_oracle, solve, verify_against_oracle

cases = {
    "four agents, two mutual favourites": SfInstance.from_lists(
        {1: [2, 3, 4], 2: [1, 3, 4], 3: [4, 1, 2], 4: [3, 1, 2]}, 1),
    "three-cycle, no stable answer": SfInstance.from_lists({1: [2, 3], 2: [3, 1], 3: [1, 2]}, 1),
    "triangle with capacity two": SfInstance.from_lists({1: [2, 3], 2: [1, 3], 3: [1, 2]}, 2),
}

for name, inst in cases.items():
    out = solve(inst)
    stable = brute_force_oracle(inst)
    found = sorted(out.matching.pairs) if out.solvable else f"unsolvable ({out.reason})"
    print(f"{name}:\n  solver  {found}\n  oracle  {[sorted(m.pairs) for m in stable]}")

print()
report = verify_against_oracle(2000, max_n=6, max_capacity=3, seed=1)
print(report.summary())
print("sound" if report.sound else "UNSOUND")
