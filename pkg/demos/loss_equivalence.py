"""Which surrogate losses rank quantizers the same way as the 0-1 loss?

Hinge loss is an affine rescaling of the 0-1 loss at the level of Bayes
risks, so the two agree on every experiment.  Logistic loss is not, and a
small explicit experiment shows the two disagreeing on which of two
quantizers is better.

Run: python3 demos/loss_equivalence.py
"""

from fdivkit import affine_equivalence_U, counterexample_search, make_loss, make_uncertainty
from fdivkit.equivalence import quantized_information

for k in (2, 3, 4):
    fit = affine_equivalence_U(make_uncertainty("zero-one", k), make_uncertainty("hinge-induced", k))
    print(f"k={k}: zero-one vs hinge  a={fit.a:.6f}  residual={fit.max_residual:.1e}  equivalent={fit.equivalent}")
fit = affine_equivalence_U(make_uncertainty("zero-one", 3), make_uncertainty("entropy", 3))
print(f"k=3: zero-one vs logistic residual={fit.max_residual:.3f}  equivalent={fit.equivalent}")

zo, lg = make_loss("zero-one", 3), make_loss("logistic", 3)
res = counterexample_search(zo, lg, 3, seed=7)
inst = res.witness.instance
print(f"\nwitness after {res.examined} random instances; |X| = {inst.experiment.m}")
for name, q in (("q1", inst.q1), ("q2", inst.q2)):
    print(f"  {name}: zero-one info {quantized_information(inst.experiment, zo, q):.5f}"
          f"  logistic info {quantized_information(inst.experiment, lg, q):.5f}")
print("zero-one prefers", "q1" if res.witness.info_a[0] > res.witness.info_a[1] else "q2",
      "while logistic prefers", "q1" if res.witness.info_b[0] > res.witness.info_b[1] else "q2")
