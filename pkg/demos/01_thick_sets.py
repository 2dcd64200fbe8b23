"""Thick control sets before and after symmetrization.

A periodic family of vertical slabs is (1/4, (1, 1))-thick.  Reflecting it
across {x_1 = 0} and keeping the mirror image gives a set on the whole
plane whose declared parameters are (1/8, (2, 1)); we check that the
sampled density respects the declared value, then walk through the sector
and equidistributed transforms.
"""

import math
from fractions import Fraction

from heatreflect.geometry import (
    EquidistParams,
    ThicknessParams,
    certify_thickness,
    iterate_sector_symmetrization,
    periodic_slabs,
    sector_params,
    symmetrize_equidistributed,
    symmetrize_halfspace,
    symmetrize_orthant,
)

S = periodic_slabs(width=0.25, period=1.0, d=2, axis=0)
rep = certify_thickness(S, (1.0, 1.0), resolution=200)
print(f"slabs: sampled gamma = {rep.gamma_estimate:.4f} (declared 0.25)")

S_half, p_half = symmetrize_halfspace(S, ThicknessParams(0.25, (1.0, 1.0)))
rep = certify_thickness(S_half, p_half.a, window=[[-2.0, 0.0], [2.0, 1.0]], resolution=200)
print(f"half-space symmetrization: declared {float(p_half.gamma)} on a = {p_half.a}, "
      f"sampled {rep.gamma_estimate:.4f}")

S_orth, p_orth = symmetrize_orthant(S, ThicknessParams(0.25, (1.0, 1.0)))
rep = certify_thickness(S_orth, p_orth.a, window=[[-2.0, -2.0], [2.0, 2.0]], resolution=100)
print(f"orthant symmetrization: declared {float(p_orth.gamma)} on a = {p_orth.a}, "
      f"sampled {rep.gamma_estimate:.4f}")

# Exact arithmetic on rationals; the sector side length is a square root.
p = ThicknessParams(Fraction(1), (Fraction(1), Fraction(1)))
q = sector_params(p)
print(f"sector step: gamma {p.gamma} -> {q.gamma}, side 1 -> {q.a[0]:.6f} (2 sqrt 2)")
for n in (3, 4, 5):
    r = iterate_sector_symmetrization(q, n)
    print(f"  H_(pi/2^{n}): gamma = {r.gamma}, side = {r.a[0]:.4f}")

for theta, name in ((math.pi / 8, "pi/8"), (math.pi / 4, "pi/4")):
    e = symmetrize_equidistributed(EquidistParams(1.0, 0.25), theta)
    print(f"equidistributed (1, 0.25) across the {name} sector boundary -> ({e.G:g}, {e.delta:g})")
