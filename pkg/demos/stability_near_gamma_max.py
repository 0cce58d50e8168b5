"""How often a small change of gamma flips the greedy action.

Inside the safe region (gamma < gamma_max) flips are rare; just past it,
cosine factors change sign and the policy becomes fragile.

    python3 demos/stability_near_gamma_max.py
"""
import math

from eqc_tsp.analysis import pc_rate_and_margin
from eqc_tsp.eqc import gamma_max
from eqc_tsp.instances import generate, rescale_to_max_edge
from eqc_tsp.sigs import make_grid

insts = [rescale_to_max_edge(i, math.sqrt(2)) for i in generate(10, 200, seed=5).instances]
grid = make_grid(0.2, 0.2, 15)
rep = pc_rate_and_margin(insts, grid, delta=0.01, beta=1.1)
print(f"gamma_max = {gamma_max(insts[0]):.3f}")
for g, pc, m in zip(rep.grid, rep.pc_rate, rep.avg_margin):
    print(f"gamma {g:3.1f}  flip rate {pc:6.2%}  mean top-2 margin {m:.4f}")
