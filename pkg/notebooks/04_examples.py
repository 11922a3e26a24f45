"""
Monte-Carlo comparisons on the two benchmark systems
====================================================

Reduced trial counts so this runs in about a minute; the CLI runs the
full tables (``klpf compare --preset example1``).
"""

# %%
from dataclasses import replace

from klpf.experiments import preset, run_experiment

# %% example 2, both quantizers
for variant in ("soi", "two_bit"):
    cfg = replace(preset("example2", variant), trials=60)
    report = run_experiment(cfg, threads=4)
    print(f"example2 / {variant}")
    print(report.summary(), "\n")

# %% example 1, sign quantizer: the linear filter runs far above its own covariance
cfg = replace(preset("example1", "soi"), trials=40)
report = run_experiment(cfg, threads=4)
print(report.summary())
ratio = report.mse["soi_kf"] / report.reference["soi_kf"]
print("soi_kf peak MSE / trace: %.1f at n=%d" % (ratio.max(), ratio.argmax()))
