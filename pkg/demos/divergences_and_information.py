"""Multi-distribution f-divergences and the losses they correspond to.

Builds a three-class experiment, evaluates every built-in divergence, then
recovers each value as the statistical information of the matching
uncertainty function under a uniform prior.

Run: python3 demos/divergences_and_information.py
"""

import numpy as np

from fdivkit import (
    affine_equivalence_U,
    Quantizer,
    f_divergence,
    f_divergence_quantized,
    loss_from_generator,
    make_experiment,
    make_generator,
    make_uncertainty,
    pointwise_bayes,
    statistical_information,
)
from fdivkit.divergences import BUILTIN_GENERATORS

P = np.array([
    [0.50, 0.30, 0.15, 0.05],
    [0.10, 0.40, 0.30, 0.20],
    [0.05, 0.15, 0.30, 0.50],
])
exp = make_experiment(np.full(3, 1 / 3), P)
coarse = Quantizer.from_assignment([0, 0, 1, 1])

print("generator      D(P)      D(P|q)    information")
for name in BUILTIN_GENERATORS:
    g = make_generator(name, 3)
    U, loss = loss_from_generator(g)
    info = statistical_information(exp, U).information
    print(f"{name:12s} {f_divergence(P, g):9.6f} {f_divergence_quantized(P, g, coarse):9.6f} {info:11.6f}")

# the Bayes risk of the loss built from KL is 3 (H(pi) + log pi_3): entropy plus a
# term that is -inf on the face pi_3 = 0, so it is not affinely related to entropy
U_kl, kl_loss = loss_from_generator(make_generator("kl", 3))
H = make_uncertainty("entropy", 3)
pi = np.array([0.6, 0.3, 0.1])
sol = pointwise_bayes(kl_loss, pi)
print(f"\nKL-derived Bayes risk at {pi.tolist()}: {sol.value:.6f} via {sol.method}")
print(f"3 (H(pi) + log pi_3):                  {3 * (H(pi) + np.log(pi[2])):.6f}")
fit = affine_equivalence_U(U_kl, H)
print(f"affine to entropy: {fit.equivalent} ({fit.reason})")
