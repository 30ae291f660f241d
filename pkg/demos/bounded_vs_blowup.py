"""Strong logistic damping keeps a bump bounded; weak damping lets it concentrate.

Runs the same bump under mu = 1.5 and mu = 0.2 with the checks switched on
and prints the sup norm at a few times next to the sup bound (mu >= 1 only).
"""
import math

from ksradial import InitialSpec, ModelParams, Scenario, run_scenario


def show(sc):
    res = run_scenario(sc)
    print(f"{sc.name}: status {res.status} at t = {res.t_reached:.4g}, checks ok: {res.ok}")
    for r in res.records[:: max(1, len(res.records) // 5)]:
        bound = "" if math.isnan(r.bound_linf) else f"   bound {r.bound_linf:.4g}"
        print(f"  t = {r.t:6.3f}   max u = {r.linf:10.4g}   mass = {r.mass:.4g}{bound}")


bump = InitialSpec("poly_bump", 50.0)
show(Scenario("bounded", ModelParams(mu=1.5, kappa=1.0, eps=0.01), cells=128, initial=bump, t_end=0.5))
show(Scenario("aggregating", ModelParams(mu=0.2, eps=0.001), cells=256, initial=bump, t_end=0.1))
