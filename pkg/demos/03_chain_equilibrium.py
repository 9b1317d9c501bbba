"""Equilibrium on a chain and what the DM actually learns.

Every relay's best response depends on how quickly the others pass evidence
along, so the joint profile is found by sweeping best responses until the
thresholds settle. The Monte Carlo simulator then plays the equilibrium
forward with exact OU paths and gated Poisson clocks, and reports each
agent's discounted payoff with a standard error.
"""

import dataclasses

from ladderlab.path import fixed_point_residual, restart_diagnostic, solve_network, unraveling_certificate
from ladderlab.presets import load_scenario
from ladderlab.simulate import delivered_fraction, estimate_values, no_information_value

cfg = load_scenario("chain")
cfg = cfg.replace(sim=dataclasses.replace(cfg.sim, reps=400))
eq = solve_network(cfg.network, cfg.ou, cfg.solver)
print(f"converged in {eq.iterations} sweeps; fixed-point residual {fixed_point_residual(eq, cfg.ou, cfg.solver):.2e}")
diag = restart_diagnostic(eq, cfg.ou, cfg.solver)
print(f"restarts from shifted thresholds land within {max(diag.gaps):.2e} (multiple fixed points: {diag.multiple})")
for i, rate in sorted(eq.pass_rates.items()):
    print(f"  agent {i}: effective pass rate {rate:.3f}")

est = estimate_values(cfg, eq.policies)
print(f"DM value V0 = {est.v0:.4f} (se {est.v0_se:.4f}); without any information {no_information_value(cfg):.4f}")
for T in (1.0, 5.0, 20.0):
    d = delivered_fraction(est.batch, T)
    print(f"  expert signal delivered by T = {T:>4}: {d.fraction:.3f}  CI ({d.ci[0]:.3f}, {d.ci[1]:.3f})")

for i in cfg.network.active:
    c = unraveling_certificate(cfg.network.agent(i), cfg.ou)
    print(f"  agent {i}: unraveling certificate gain {c.gain:+.3f} (needs beta >= {c.beta_min:.3f})")
