"""The closed-form bounds and the scalar comparison machinery on small inputs."""
import math

import numpy as np

from ksradial.oracles import (
    ScalarTrajectory,
    blowup_threshold,
    blowup_time_bound,
    common_existence_time,
    comparison_check,
    logistic_bound,
    solve_scalar_ode,
)

print("sup bound, kappa=1, mu=2, m=3:", [round(logistic_bound(1.0, 2.0, 3.0, t), 4) for t in (0, 0.5, 1, 2, 4)])

# y' = y^2 escapes at t = 1; the lemma's bound for a = 1, d = 1, exponent 2 is 2
tr = solve_scalar_ode(lambda y: y * y, 1.0, 2.0, 1e-4)
print(f"numeric escape at t = {tr.escape_time:.4f}, bound {blowup_time_bound(1.0, 0.0, 1.0, 2.0)}")

t = np.linspace(0.0, 1.0, 201)
z = ScalarTrajectory(t, 0.9 * np.exp(t) - 0.1 * t)  # grows no faster than z' = z allows
v = comparison_check(z, lambda y: y, 1.0)
print(f"comparison: hypothesis {v.hypothesis_holds}, z <= y {v.conclusion_holds}, margin {v.worst_margin:.4f}")

print("threshold C(p) at p=4, mu=0.5, |Omega|=1, B=1:", round(blowup_threshold(4, 0.5, 1.0, 1.0), 6))
w = common_existence_time(1.0, 4.0, 0.0, 4 * math.pi / 3, 1.0, 1.0, 1.0)
print(f"existence window T(D) = {w.T_of_D:.4e}, M(D) = {w.M_of_D:.4f}")
