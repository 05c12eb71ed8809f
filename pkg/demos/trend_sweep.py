"""A small version of the user-count sweep, written to sweep_K.csv.

Ten realisations per point keep it to about a minute on one core; the
acceptance suite runs the same sweep with 50.
"""

from vrcast.experiments import SweepSpec, run_sweep, write_csv

spec = SweepSpec("K", [1, 2, 3, 4], realizations=10, schemes=("wo-a", "wo-r", "unicast", "baseline-w-r"))
rows = run_sweep(spec)
write_csv(rows, "sweep_K.csv")

schemes = list(spec.schemes)
print("K   " + "".join(f"{s:>15s}" for s in schemes))
for value in spec.values:
    means = {r.scheme: r.mean_energy for r in rows if r.param == value}
    print(f"{value:<4d}" + "".join(f"{means[s]:15.3e}" for s in schemes))
print("\nfull table in sweep_K.csv")
