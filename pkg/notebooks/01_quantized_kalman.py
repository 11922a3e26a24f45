"""
Quantized-innovation Kalman filtering
=====================================

A sensor sends only the bin of its normalized innovation.  The linear
filter built on those bits contracts its covariance by a factor lambda
instead of 1.
"""

# %%
import numpy as np

from klpf import (StateSpaceModel, RngStream, simulate, sign_scheme, two_bit_scheme,
                  lambda_scheme_of, riccati_sequence, run_filter)

# %% gains and lambda for the two schemes used throughout
for scheme in (sign_scheme(), two_bit_scheme()):
    ls = lambda_scheme_of(scheme)
    print(scheme.levels, "levels  lambda =", round(ls.lam, 6), " gains =", np.round(ls.gains, 4))
print("2/pi =", 2 / np.pi)

# %% full vs modified Riccati on a scalar random walk
model = StateSpaceModel(A=[[0.9]], h=[1.0], W=[[1.0]], sigma_v2=1.0, P0=[[1.0]])
_, full = riccati_sequence(model, 30, 1.0)
_, soi = riccati_sequence(model, 30, 2 / np.pi)
print("steady filtered variance: full %.4f  sign-only %.4f" % (full[-1, 0, 0], soi[-1, 0, 0]))

# %% one run of the SOI-KF against the full-information filter
traj = simulate(model, 200, RngStream(3))
x = traj.states[:, 0]
for kind in ("soi_kf", "full_kf"):
    out = run_filter(kind, model, sign_scheme(), traj)
    err = out.estimates[20:, 0] - x[20:]
    print(f"{kind:8s} empirical MSE {np.mean(err**2):.3f}")
