"""Explicit control-cost bounds across shapes.

All bounds are computed as logarithms, so tiny T (where the bounds explode)
stays finite.  The universal constants are placeholders (K = D = 1); only
relative behaviour between shapes and parameters is meaningful.
"""

import numpy as np

from heatreflect.costbounds import (
    UniversalConstants,
    cost_bound_domain,
    cost_bound_equidistributed,
    cost_bound_equidistributed_domain,
    cost_bound_fractional,
    cost_bound_thick,
)

gamma, a = 0.25, (1.0, 1.0)
print(f"log C_T bounds for a ({gamma}, {a})-thick control set")
print(f"{'T':>8} {'R^2':>10} {'halfspace':>10} {'orthant':>10} {'sector n=3':>11} {'triangle':>10} {'frac 0.75':>10}")
for T in np.logspace(-2, 1, 7):
    row = [
        cost_bound_thick(gamma, a, T).log_value,
        cost_bound_domain("halfspace", gamma, a, T).log_value,
        cost_bound_domain("orthant", gamma, a, T).log_value,
        cost_bound_domain("sector", gamma, a, T, n=3).log_value,
        cost_bound_domain("triangle", gamma, a, T).log_value,
        cost_bound_fractional(gamma, a, T, 0.75).log_value,
    ]
    print(f"{T:8.3g} " + " ".join(f"{v:10.3f}" for v in row))

r = cost_bound_thick(1e-3, (5.0, 5.0), 1e-3)
print(f"\nextreme parameters: log value {r.log_value:.4g}, overflow flag {r.overflow}, value {r.value}")

consts = UniversalConstants(K=1.0, D={2: 1.0, 3: 1.0})
print("\nequidistributed (G, delta) = (1, 0.2), T = 1")
print(f"  whole space     {cost_bound_equidistributed(1.0, 0.2, 1.0, consts=consts).log_value:.4f}")
for kind, n in (("sector", 2), ("sector", 3), ("triangle", None)):
    r = cost_bound_equidistributed_domain(kind, 1.0, 0.2, 1.0, consts=consts, n=n)
    print(f"  {kind:<9} n={n}  {r.log_value:.4f} (scaled G = {r.inputs['G_scaled']:g})")
