"""The Gaussian-channel bound against a kNN estimate of the same quantity.

For a Gaussian input the bound ``0.5 * log(1 + 1/chi**2)`` on
``I(X + eta * eps; X)`` holds with equality, so a KSG estimate should track
it across noise levels. The two estimate columns show how much of the gap is
sampling noise.
"""
import math

import numpy as np

from mpir.info_estimators import ksg_mutual_information
from mpir.noise_channel import NoiseAmplitudes, corrupt, mi_upper_bound

rng = np.random.default_rng(1)
sizes = (1000, 8000)

print(f"{'chi':>6} {'bound':>8} " + " ".join(f"{f'n={n}':>9}" for n in sizes))
for chi in (0.25, 0.5, 1.0, 2.0, 4.0):
    amps = NoiseAmplitudes(np.array([math.log(chi)]), np.ones((1, 1)))
    est = []
    for n in sizes:
        x = rng.standard_normal(n)
        xt, _ = corrupt(x[:, None], amps, rng)
        est.append(ksg_mutual_information(x, xt[:, 0], k=5))
    print(f"{chi:6.2f} {mi_upper_bound(amps).total:8.4f} " + " ".join(f"{v:9.4f}" for v in est))
