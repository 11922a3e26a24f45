"""
Exact conditional law of the state
==================================

Given the quantized innovations, x(n) is closed skew-normal: a Gaussian
density times a ratio of box probabilities.  Here we build it for two
measurements of a scalar model and compare with brute-force rejection.
"""

# %%
import numpy as np

from klpf import (StateSpaceModel, RngStream, simulate_batch, sign_scheme,
                  cond_density_initial, cond_density_measurement_update,
                  cond_density_time_update, cond_density_estimate, gcsn_pdf)
from klpf.filters import QuantizedKalmanFilter

model = StateSpaceModel(A=[[0.9]], h=[1.0], W=[[1.0]], sigma_v2=1.0, P0=[[1.0]])
scheme = sign_scheme()

# %% boxes the fusion center would publish for labels (1, 0)
flt = QuantizedKalmanFilter(model, scheme)
boxes = []
for q in (1, 0):
    yhat, std = flt.innovation()
    lo, hi = scheme.interval_of(q)
    boxes.append((lo * std + yhat, hi * std + yhat))
    flt.assimilate(*boxes[-1], label=q)
lower, upper = np.array(boxes).T
print("boxes:", boxes)

# %% conditional law after both measurements
st = cond_density_initial(model)
st = cond_density_measurement_update(st, lower[0], upper[0])
st = cond_density_measurement_update(cond_density_time_update(st), lower[1], upper[1])
est = cond_density_estimate(st, 200_000, RngStream(1))
print("E[x(1) | q] = %.4f +- %.4f   var %.4f" % (est.mean[0], est.se[0], est.cov[0, 0]))
print("SOI-KF says  %.4f            var %.4f" % (flt.history.estimates[-1][0], est.kalman_cov[0, 0]))

# %% rejection check
x, y = simulate_batch(model, 1, 2_000_000, RngStream(2))
ok = np.all((y > lower) & (y <= upper), axis=1)
print("rejection   %.4f  (%d accepted)" % (x[ok, 1, 0].mean(), ok.sum()))

# %% density on a coarse grid
rng = np.random.default_rng(0)
for g in np.linspace(-3, 2, 6):
    print(f"x={g:+.1f}  f={gcsn_pdf(st.dist, [g], 2**14, rng)[0]:.4f}")
