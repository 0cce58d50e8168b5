"""Train the depth-1 policy on TSP-10 by a grid search over gamma.

Only gamma needs searching: any beta with sin(pi*beta) < 0 yields the same
greedy tours. The validation curve is printed so its flat bottom is visible.

    python3 demos/grid_search_tsp10.py
"""
from eqc_tsp.instances import generate
from eqc_tsp.sigs import SigsConfig, run_sigs
from eqc_tsp.solvers import attach_references

val = attach_references(generate(10, 100, seed=1, role="validation"))
test = attach_references(generate(10, 300, seed=2, role="test"))

res = run_sigs(val, test, SigsConfig(beta=1.01))
for g, gap in res.per_gamma_gaps.items():
    bar = "#" * int(round((gap - 1.0) * 400))
    print(f"gamma {g:4.1f}  val gap {gap:.4f}  {bar}")
print(f"\nselected gamma {res.gamma_star}; test mean {res.test.mean:.4f}, "
      f"worst {res.test.worst:.4f} over {res.test.per_instance.size} instances")
