"""
Particle filters on quantized innovations
=========================================

Alg 1 is a bootstrap filter over the state, Alg 2 keeps a truncated
measurement history per particle, and the Kalman-like filter replaces
the history with one Kalman mean per particle and a shared covariance.
"""

# %%
import time

import numpy as np

from klpf import RngStream, simulate, two_bit_scheme, run_filter
from klpf.experiments import example2_model

model = example2_model()
scheme = two_bit_scheme()
# Alg 2 carries whole histories, so keep the run under its 64-step cap
traj = simulate(model, 60, RngStream(11, (0,)))

# %% same trajectory, four filters
# alg2 and klpf share a seed and consume the same draws, so their rows match exactly
for kind, N in (("mlq_kf", None), ("alg1", 750), ("alg2", 25), ("klpf", 25)):
    t0 = time.perf_counter()
    out = run_filter(kind, model, scheme, traj, N, RngStream(11, (1, 0)))
    err = out.estimates[20:] - traj.states[20:]
    ess = np.min(out.ess) if N else np.nan
    print(f"{kind:7s} N={N!s:>5}  sq err {np.mean(np.sum(err**2, axis=1)):.4f}"
          f"  min ESS {ess:7.1f}  {1e3 * (time.perf_counter() - t0):6.0f} ms")

# %% the Kalman-like filter with a single particle is the Kalman update on a sampled pseudo-measurement
out = run_filter("klpf", model, scheme, traj, 1, RngStream(12))
print("N=1 estimates at n=0..4:\n", np.round(out.estimates[:5], 4))
