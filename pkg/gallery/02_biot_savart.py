"""Recovering velocity from vorticity in the plane and in three dimensions.

The Gaussian vortex has a closed-form azimuthal speed, so the planar law can
be compared node by node. A vorticity column that does not vary along x3
must give back exactly the planar velocity and no axial component.
"""

import numpy as np

from burgers_vortex.biot_savart import biot_savart_2d, bs3d_operator, gaussian_vortex_speed
from burgers_vortex.checks import check_bs3d_consistency
from burgers_vortex.perturbation_dynamics import bump_perturbation
from burgers_vortex.vortex_solver import gaussian_profile
from burgers_vortex.weighted_fields import Grid2D, Grid3D

for N in (64, 128):
    grid = Grid2D(12.0, N)
    r, num, ana = gaussian_vortex_speed(grid)
    err = np.abs(num / ana - 1.0)
    print(f"N = {N:3d}: max relative speed error on 0.25 <= r <= 6 is {err.max():.2e}"
          f" (peak speed {ana.max():.5f} near r = {r[np.argmax(ana)]:.2f})")

grid = Grid2D(12.0, 128)
vel = biot_savart_2d(gaussian_profile(0.3).field(grid))
x = grid.x
inner = np.abs(x) <= 8.0
print(f"\nelliptic vortex (lambda = 0.3): max |div u| in |x| <= 8 is "
      f"{np.abs(vel.divergence()[np.ix_(inner, inner)]).max():.2e}")

grid3 = Grid3D(grid, 8.0, 64)
res = check_bs3d_consistency(grid3)
print(f"\nx3-independent column: 3D vs 2D relative deviation {res.value:.2e}")

# a divergence-free vorticity bump with transverse components induces axial flow
w1, w2, w3 = bump_perturbation(grid3, amplitude=0.01)
u1, u2, u3 = bs3d_operator(grid3).velocity(w1, w2, w3)
print(f"vorticity bump: max |u3| = {np.abs(u3).max():.3e}, max |u_perp| = {np.hypot(u1, u2).max():.3e}")
