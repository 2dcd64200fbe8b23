"""Minimal-norm null controls from the controllability Gramian.

First the scalar system u' + u = v, where the minimal control norm from
u0 = 1 at T = 1 is e^{-1} sqrt(2 / (1 - e^{-2})).  Then a 1D heat equation
controlled from (0.5, 0.75): the cost rises steeply as the horizon shrinks.
"""

import math

import numpy as np

from heatreflect.control import ControlProblem, HUMSolver, Quadrature, hum_control, observed_cost
from heatreflect.discretize import CoefficientField, assemble_operator, build_grid
from heatreflect.transfer import AbstractSystem

scalar = AbstractSystem(np.array([[1.0]]), np.array([[1.0]]))
sol = hum_control(ControlProblem(scalar, 1.0, [1.0], Quadrature(32), eps=0.0))
closed = math.exp(-1) * math.sqrt(2 / (1 - math.exp(-2)))
print(f"scalar: |v| = {sol.control_norm:.15f}, closed form {closed:.15f}")

g = build_grid("interval", cells=64, dim=1)
x = g.centers[:, 0]
chi = (x > 0.5) & (x < 0.75)
heat = assemble_operator(g, CoefficientField.build(g), "dirichlet", chi)
u0 = np.sin(np.pi * x) + 0.3 * np.sin(4 * np.pi * x)

print("\nheat equation on (0, 1), control on (0.5, 0.75)")
print(f"{'T':>6} {'|v|/|u0|':>12} {'residual':>10} {'cond':>9} {'operator cost':>14}")
for T in (1.0, 0.5, 0.25, 0.1):
    s = HUMSolver(heat, T, Quadrature(48))
    r = s.solve(u0)
    print(f"{T:6.2f} {r.per_datum_cost:12.4e} {r.terminal_residual:10.1e} {r.gramian_condition:9.1e} "
          f"{observed_cost(heat, T, Quadrature(48), mode='operator'):14.4e}")
