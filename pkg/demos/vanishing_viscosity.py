"""Halving eps repeatedly: the solutions form a Cauchy sequence in sup norm."""
from ksradial import InitialSpec, ModelParams, eps_sweep

rep = eps_sweep(InitialSpec("poly_bump", 5.0), ModelParams(mu=2.0, kappa=1.0), eps0=0.1, levels=4, t_end=0.3, cells=128)
for e, o in zip(rep.eps_list, rep.outcomes):
    print(f"eps = {e:<8g} {o['status']:>9}  max u over time = {o['linf_max']:.5f}")
print("distances between neighbours:", ", ".join(f"{d:.4f}" for d in rep.distances))
print("ratios:", ", ".join(f"{r:.3f}" for r in rep.ratios))
