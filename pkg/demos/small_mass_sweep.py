"""Monte Carlo estimate of E sup_t |u(t) - u^mu(t)|_H^2 over a grid of masses.

Runs with 64 coupled paths per level. Passing workers > 1 spreads the chunks
over processes without changing a single output bit.
"""

import sys

import numpy as np

from skwave.experiments import ExperimentConfig, run_sk_sweep
from skwave.fields import Coefficients, make_map
from skwave.noise import build_covariance
from skwave.solver import SimConfig
from skwave.spectrum import build_domain

workers = int(sys.argv[1]) if len(sys.argv) > 1 else 1

dom = build_domain(1, [np.pi], 32)
cov = build_covariance(dom, {"kind": "constant", "value": 1.0})
u0 = np.zeros(32)
u0[:2] = [1.0, 0.5]

for label, g in [("additive", {"kind": "constant", "value": 1.0}),
                 ("multiplicative", {"kind": "bounded_diffusion"})]:
    base = SimConfig(dom, Coefficients(make_map("sine"), make_map(g)), cov, 1.0, 512, initial_u=u0)
    rep = run_sk_sweep(ExperimentConfig(base, (1e-1, 1e-2, 1e-3), n_paths=64, workers=workers))
    print(f"\n{label}: passed={rep.passed}, log-log trend {rep.trend:.2f}")
    for m in rep.per_mu:
        print(f"  mu={m.mu:<6g} estimate={m.estimate:.4e} +- {m.std_error:.1e}")
