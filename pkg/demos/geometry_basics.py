"""
Displacement and effective dimension
====================================

Two geometric summaries of an embedding matrix Z (N rows, d columns):
how far rows moved from a reference, and how many directions carry
the variance.
"""

import numpy as np

from dprgmi.geometry import covariance_summary, displacement, effective_dimension

rng = np.random.default_rng(0)

# isotropic cloud: every direction carries the same variance, so d_eff ~ d
Z = rng.standard_normal((5000, 8))
print("isotropic, d=8:        d_eff =", round(effective_dimension(Z), 3))

# stretch one axis and the participation ratio collapses toward 1
scales = np.array([10.0, 1, 1, 1, 1, 1, 1, 1])
print("one dominant axis:     d_eff =", round(effective_dimension(Z * scales), 3))

# rank one: all rows on a line
print("rank one:              d_eff =", round(effective_dimension(rng.standard_normal((500, 1)) * rng.standard_normal(8)), 3))

# d_eff only looks at the spectrum, so rotations and rescaling leave it alone
Q, _ = np.linalg.qr(rng.standard_normal((8, 8)))
s = covariance_summary(Z * scales)
print(f"trace={s.trace:.2f} ||S||_F^2={s.frob_sq:.2f}; rotated d_eff =",
      round(effective_dimension(Z * scales @ Q), 3))

# displacement is the mean squared row distance; a pure shift by t moves every row by |t|^2
t = np.full(8, 0.5)
print("shift by 0.5 in 8 dims: displacement =", displacement(Z + t, Z))
print("small noise:            displacement =", round(displacement(Z + 0.1 * rng.standard_normal(Z.shape), Z), 4))
