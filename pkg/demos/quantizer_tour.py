"""Tour of the quantizer family on a single input vector.

For each scheme: the declared noise budget, the empirical error moments over
many draws, and the bit cost of one encoded message. The identity scheme
pays the full high-precision price; everything else trades error for bits.
"""

import numpy as np

from subspaceq import quantizers
from subspaceq.streams import setup_rng

x = np.array([0.31, -1.2, 0.05, 2.4, -0.7])
L = x.size
rng = setup_rng(2024, 0)

schemes = [
    ("identity", quantizers.identity(L)),
    ("uniform delta=0.05", quantizers.uniform(0.05, L)),
    ("compander omega=0.25 eta=0.01", quantizers.anq(0.25, 0.01, L)),
    ("random 2 of 5", quantizers.randc(2, L)),
    ("gossip q=0.5", quantizers.gossip(0.5, L)),
    ("sparsifier q_s=0.3", quantizers.sparsifier(0.3, L)),
    ("qsgd s=4", quantizers.qsgd(4, L)),
]

print(f"input x = {x}, ||x||^2 = {x @ x:.4f}\n")
header = f"{'scheme':32s} {'beta^2':>8s} {'sigma^2':>9s} {'mse(1e5)':>10s} {'budget':>9s} {'bits':>6s}"
print(header)
print("-" * len(header))
for name, spec in schemes:
    budget = quantizers.noise_budget(spec)
    mom = quantizers.empirical_moments(spec, x, rng, 10**5)
    cap = budget.beta_sq * float(x @ x) + budget.sigma_sq
    msg = quantizers.quantize(spec, x, rng)
    print(f"{name:32s} {budget.beta_sq:8.3f} {budget.sigma_sq:9.5f} "
          f"{mom['mse']:10.5f} {cap:9.5f} {msg.bit_cost:6.1f}")

print("\nA few reconstructions under the uniform scheme (unbiased dither):")
spec = quantizers.uniform(0.25, L)
for _ in range(4):
    msg = quantizers.quantize(spec, x, rng)
    print("  ", np.array2string(quantizers.reconstruct(spec, msg), precision=3))
mean = np.zeros(L)
n = 2000
for _ in range(n):
    msg = quantizers.quantize(spec, x, rng)
    mean += quantizers.reconstruct(spec, msg)
print("mean of 2000 reconstructions:", np.array2string(mean / n, precision=3))
