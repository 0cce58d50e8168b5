"""Q-learning of (gamma, beta) on TSP-5 with the default hyperparameters,
compared with the grid-search result on the same data.

    python3 demos/q_learning_tsp5.py
"""
from eqc_tsp.instances import generate
from eqc_tsp.rl import RlConfig, train
from eqc_tsp.sigs import run_sigs
from eqc_tsp.solvers import attach_references

train_set = attach_references(generate(5, 500, seed=0, role="train"))
val = attach_references(generate(5, 100, seed=1, role="validation"))
test = attach_references(generate(5, 1000, seed=2, role="test"))

res = train(train_set, val, test, RlConfig(), seed=0)
gamma, beta = res.params
print(f"episodes {res.episodes_run}, updates {res.updates}, early stop: {res.stopped_early}")
print(f"learned gamma {gamma:.4f}, beta {beta:.4f}; test mean gap {res.test.mean:.4f}")
print(f"grid search test mean gap {run_sigs(val, test).test.mean:.4f}")
