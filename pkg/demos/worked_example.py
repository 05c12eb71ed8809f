"""Four users on a 4x8 tile grid: who shares what, and what sharing saves.

Run with ``python3 demos/worked_example.py``; takes a few seconds.
"""

from dataclasses import replace
from pathlib import Path

import numpy as np

from vrcast import build_partition, shared_levels, solve_all_cases
from vrcast.config import load_scenario
from vrcast.scenario import UserCompute

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "four_users.json"

sc = load_scenario(CONFIG)
req = {r.user: r.requirement for r in sc.requests}
print("requirements:", req)

# Tiles split by the exact set of users that asked for them.
print("\npartition")
for users, tiles in build_partition(sc.requests).describe():
    print(f"  users {str(users):8s} {len(tiles)} tiles  {list(tiles)}")

# Which pairs can be served by one transmission, and under which rule.
print("\nshared levels per group (L=3, delta=1)")
for users, _ in sc.partition.describe():
    if len(users) < 2:
        continue
    rs = [req[u] for u in users]
    row = {kind: sorted(shared_levels(rs, sc.delta, sc.levels, kind)) for kind in ("natural", "relative", "transcoding")}
    print(f"  {users}: r={rs}  {row}")

# The four cases differ only in how much freedom the level choice has.
print("\nminimum energy per frame")
solved = solve_all_cases(sc, rng=np.random.default_rng(0))
for name, res in solved.items():
    sent = res.selection.transmitted()[sc.members].astype(int)
    print(f"  {name:5s} {res.objective:.4e} J  transmitted levels {sent.tolist()}")

# With the default 20 uW transcoding power, transcoding never pays here.
# Make it nearly free and the (1,2) group switches to one shared top-level stream.
cheap = replace(sc, compute=UserCompute.uniform(1e-15, len(sc.requests)))
res = solve_all_cases(cheap, rng=np.random.default_rng(0), cases=("wo-a", "w-a"))
print(f"\nwith near-free transcoding: w-a {res['w-a'].objective:.4e} J vs wo-a {res['wo-a'].objective:.4e} J")
