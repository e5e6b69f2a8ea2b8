"""Build a network, a smoothness subspace, and a matching combination matrix.

The combination matrix must leave the subspace untouched in both directions
and contract everything orthogonal to it. The spectral report summarizes how
fast the complement mixes and how much mixing a noisy quantizer allows.
"""

import numpy as np

from subspaceq import analysis, graphs, quantizers

rng = np.random.default_rng(2)
n, l = 12, 3

# ring lattice with a few shortcuts keeps the low Laplacian eigenvectors
# spread out, which the least-squares fit needs
edges = {(min(k, (k + d) % n), max(k, (k + d) % n))
         for k in range(n) for d in (1, 2, 3)}
for i in range(n):
    for j in range(i + 1, n):
        if (i, j) not in edges and rng.random() < 0.15:
            edges.add((i, j))
top = graphs.build_topology(n, [(a + 1, b + 1) for a, b in edges])
print(f"{n} agents, {len(edges)} links, degrees "
      f"{[len(top.neighborhoods[k]) - 1 for k in range(n)]}")

basis = graphs.subspace_smooth(top, 2, l, weight=1.0)
comb = graphs.build_combination(top, basis, mode="subspace-lsq")
u = basis.u
print(f"subspace dimension {u.shape[1]} inside ambient {u.shape[0]}")
print(f"constraint residuals: Au-u {np.max(np.abs(comb.a @ u - u)):.2e}, "
      f"u'A-u' {np.max(np.abs(u.T @ comb.a - u.T)):.2e}")

rep = analysis.spectral_report(comb, basis)
print(f"complement mixing radius {rep.rho_j:.4f}, "
      f"basis conditioning v1*v2 = {rep.v1 * rep.v2:.3f}")

print("\nhow much mixing each quantizer's noise budget tolerates:")
for name, spec in [("uniform delta=0.02", quantizers.uniform(0.02, l)),
                   ("compander omega=0.25", quantizers.anq(0.25, 0.001, l)),
                   ("compander omega=1.0", quantizers.anq(1.0, 0.001, l)),
                   ("sparsifier q_s=0.2", quantizers.sparsifier(0.2, l))]:
    beta_sq = quantizers.noise_budget(spec).beta_sq
    print(f"  {name:24s} beta^2={beta_sq:5.2f} "
          f"gamma_bound={analysis.gamma_bound(rep, beta_sq):.4f}")
