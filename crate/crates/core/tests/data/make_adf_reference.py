"""Regenerates adf_reference.csv with statsmodels.

Each row: kind, ADF statistic, p-value, then the 256 series values.
"""
import numpy as np
from statsmodels.tsa.stattools import adfuller

rows = []
for i in range(20):
    rng = np.random.default_rng(1000 + i)
    e = rng.standard_normal(256)
    kind = "white_noise" if i < 10 else "random_walk"
    x = e if kind == "white_noise" else np.cumsum(e)
    stat, p, *_ = adfuller(x, maxlag=15, autolag=None, regression="c")
    rows.append([kind, repr(float(stat)), repr(float(p))] + [repr(float(v)) for v in x])

with open("adf_reference.csv", "w") as f:
    f.write("kind,statistic,p_value," + ",".join(f"v{j}" for j in range(256)) + "\n")
    for r in rows:
        f.write(",".join(r) + "\n")
