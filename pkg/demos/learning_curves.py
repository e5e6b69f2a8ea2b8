"""Learning curves under quantized communication at three step sizes.

Each halving of the step size buys roughly 3 dB of steady error while the
average bit rate stays put: the differential inputs shrink with mu and the
compander step eta = mu / sqrt(2 L) shrinks along with them.
"""

import math

import numpy as np

from subspaceq import graphs, learning, quantizers
from subspaceq.learning import DataModel, RunConfig

n, l = 20, 5
top = graphs.build_topology(n, 1.0, seed=0)
basis = graphs.subspace_consensus(n, l)
comb = graphs.build_combination(top, basis, mode="consensus-metropolis")

rng = np.random.default_rng(31)
raw = rng.normal(0.4, 1.0, n * l)
targets = graphs.smooth_signal(graphs.laplacian(top, 0.1), raw=raw,
                               tau=3.0, l=l).reshape(n, l)
models = [DataModel(rng.uniform(1.5, 2.5), rng.uniform(0.1, 0.2), targets[k])
          for k in range(n)]

mu0 = 0.003
print(f"{n} agents, consensus subspace, compander omega=0.25, 5 runs each\n")
print(f"{'mu':>10s} {'iters':>6s} {'steady MSD':>11s} {'bits/comp':>10s}")
for factor, iters in ((1.0, 1400), (2.0, 900), (4.0, 700)):
    mu = factor * mu0
    spec = quantizers.anq(0.25, mu / math.sqrt(2 * l), l)
    cfg = RunConfig(mu=mu, gamma=0.88, iterations=iters, runs=5,
                    quantizer=spec, seed=5)
    res = learning.run(cfg, models, basis, comb)
    msd = learning.steady_mean(res.msd_db)
    rate = learning.steady_mean(res.rate)
    print(f"{mu:10.4f} {iters:6d} {msd:8.2f} dB {rate:10.3f}")

print("\nfirst iterations of the mu0 curve (dB):")
spec = quantizers.anq(0.25, mu0 / math.sqrt(2 * l), l)
cfg = RunConfig(mu=mu0, gamma=0.88, iterations=300, runs=3,
                quantizer=spec, seed=5)
res = learning.run(cfg, models, basis, comb)
for i in range(0, 301, 50):
    bar = "#" * max(0, int(res.msd_db[i] + 42))
    print(f"  iter {i:4d} {res.msd_db[i]:8.2f}  {bar}")
