"""The depth-1 circuit expectation has a closed form; check it against a
statevector simulation and look at how Q-values rank the candidate nodes.

    python3 demos/closed_form_vs_circuit.py
"""
import math

import numpy as np

from eqc_tsp.eqc import EqcParams, gamma_max, q_table, zz_expectation
from eqc_tsp.instances import random_instance
from eqc_tsp.quantum_oracle import expectation_zz, simulate_eqc

inst = random_instance(6, seed=7, id="demo")
s = np.full(6, math.pi)
s[[0, 2]] = 0.0  # visited 0 then 2, now standing at node 2
params = EqcParams(gamma=0.9, beta=1.1)

psi = simulate_eqc(inst, s, params)
print("node  closed form       statevector       d(2, a)")
for a in np.flatnonzero(s != 0):
    cf = zz_expectation(inst, s, 2, a, params)
    sv = expectation_zz(psi, 2, a)
    print(f"{a:>4}  {cf:+.12f}  {sv:+.12f}  {inst.d[2, a]:.4f}")

table = q_table(inst, s, 2, params)
print(f"\ngamma_max = {gamma_max(inst):.4f}; greedy move from node 2 -> {table.argmax()}")
print("nearest unexplored node:", min(np.flatnonzero(s != 0), key=lambda a: inst.d[2, a]))
