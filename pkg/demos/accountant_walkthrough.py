"""
Privacy accounting for DP-SGD
=============================

How epsilon grows with the number of steps, shrinks with the noise
multiplier, and how to pick a noise multiplier for a target epsilon.
"""

import numpy as np

from dprgmi import accountant

# one step of the subsampled Gaussian mechanism, as an RDP curve over orders
curve = accountant.rdp_subsampled_gaussian(q=0.032, sigma=1.5)
for a, v in list(zip(curve.orders, curve.values))[:5]:
    print(f"order {a:3d}: eps_alpha = {v:.6f}")

# steps compose additively at each order, then convert to (eps, delta)
for T in (1, 10, 100, 1000):
    eps, order = accountant.rdp_to_eps(accountant.compose(curve, T), 1e-5)
    print(f"T={T:5d}  eps={eps:8.3f}  (best order {order})")

# more noise, less epsilon
for sigma in np.linspace(0.6, 4.0, 5):
    print(f"sigma={sigma:.2f}  eps={accountant.epsilon(0.032, sigma, 200, 1e-5):.3f}")

# calibration inverts the map: the benchmark uses batch 128 out of 4000 for 200 steps
q = 128 / 4000
for target in (8.0, 2.0, 0.7):
    sigma = accountant.calibrate_sigma(target, 1e-5, q, 200)
    print(f"target eps={target:<4g} -> sigma={sigma:.4f}, achieved eps={accountant.epsilon(q, sigma, 200, 1e-5):.4f}")
