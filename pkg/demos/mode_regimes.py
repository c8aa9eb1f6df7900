"""How a single mode of the damped wave equation approaches the heat mode.

Each mode solves mu f'' + f' + alpha f = 0. For small mu the velocity-started
solution f(t; 0, 1/mu) collapses onto exp(-alpha t) after a layer of width ~mu,
while the position-started solution f(t; 1, 0) stays close to it throughout.
"""

import numpy as np

from skwave.semigroup import ModeParams, classify, n_mu, propagator, verify_lemma_f_bounds
from skwave.spectrum import build_domain

alpha = 4.0
t = np.linspace(0.0, 2.0, 2001)
heat = np.exp(-alpha * t)

print("mu        regime        sup|f(t;1,0)-heat|   sup_{t>0.1}|f(t;0,1/mu)-heat|")
for mu in [0.5, 0.1, 0.0625, 0.01, 0.001]:
    a, b, _, _ = propagator(mu, alpha, t)
    late = t >= 0.1
    print(f"{mu:<9g} {classify(mu, alpha).value:<13} {np.abs(a - heat).max():<20.3e} "
          f"{np.abs(b[late] / mu - heat[late]).max():.3e}")

# the decay and energy bounds hold across regimes
rep = verify_lemma_f_bounds(ModeParams(0.01, 400.0), v=1.0, t_grid=np.linspace(0, 1, 500))
print("\nbounds at mu=0.01, alpha=400:", "pass" if rep.passed else "FAIL")
for check in rep.checks:
    print(f"  {check.name:<18} applicable={check.applicable!s:<5} excess={check.max_excess:.2e}")

# modes with 1 - 4 mu alpha >= 0 are overdamped; on (0, pi) there are floor(1/(2 sqrt(mu))) of them
dom = build_domain(1, [np.pi], 200)
for mu in [1e-2, 1e-3, 1e-4]:
    print(f"N_mu({mu:g}) = {n_mu(dom, mu)}")
