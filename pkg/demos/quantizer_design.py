"""Choosing a quantizer from data by surrogate empirical risk minimization.

With the hinge loss the risk gap of the learned quantizer shrinks to zero as
the sample grows.  With the logistic loss on a two-quantizer family taken
from a ranking counterexample, ERM settles on the wrong quantizer and the
gap plateaus.

Run: python3 demos/quantizer_design.py
"""

import numpy as np

from fdivkit import consistency_experiment, make_experiment, make_loss, optimize_quantizer
from fdivkit.equivalence import counterexample_search

exp = make_experiment(np.full(3, 1 / 3), [
    [0.30, 0.25, 0.10, 0.10, 0.15, 0.10],
    [0.10, 0.10, 0.30, 0.25, 0.10, 0.15],
    [0.15, 0.10, 0.10, 0.15, 0.25, 0.25],
])
q, risk = optimize_quantizer(exp, make_loss("zero-one", 3), 3)
print(f"best 3-cell quantizer {q.assignment.tolist()}  0-1 risk {risk:.5f}")

rep = consistency_experiment(exp, make_loss("hinge", 3), [100, 1000, 10000], 50, seed=0, max_codes=3)
print("hinge ERM   n:", rep.schedule, " mean 0-1 gap:", np.round(rep.mean_gap, 5).tolist(),
      " Fisher violations:", rep.fisher_violations)

zo, lg = make_loss("zero-one", 3), make_loss("logistic", 3)
w = counterexample_search(zo, lg, 3, seed=7).witness
family = [w.instance.q1, w.instance.q2]
plateau = abs(w.info_a[0] - w.info_a[1])
for name, loss, force in (("hinge", make_loss("hinge", 3), False), ("logistic", lg, True)):
    rep = consistency_experiment(w.instance.experiment, loss, [1000, 10000, 100000], 20,
                                 seed=0, quantizers=family, force=force)
    print(f"{name:8s} on witness family, mean gap:", np.round(rep.mean_gap, 5).tolist())
print(f"plateau predicted by the witness: {plateau:.5f}")
