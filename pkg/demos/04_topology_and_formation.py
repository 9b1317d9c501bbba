"""Which network should carry the information, and which one forms?

With common random numbers, topologies are compared on identical draws, so
paired differences have far smaller errors than the values themselves.
A reputational star (two parallel relays, each linked to the DM) beats the
ordered line when one relay has much more at stake. Link formation is then
decided by the agents themselves: stable networks can have too few links or
too many relative to the socially efficient one.
"""

import dataclasses

from ladderlab.formation import classify
from ladderlab.presets import formation_instance, load_scenario
from ladderlab.topology import compare_line_star

cfg = load_scenario("line")
cfg = cfg.replace(sim=dataclasses.replace(cfg.sim, reps=400))
net = cfg.network
mids = sorted((net.agent(k) for k in net.ids if net.agent(k).role == "intermediary"), key=lambda a: -a.beta)
rep = compare_line_star(net.agent(net.experts[0]), mids[0], mids[1], net.agent(net.dm), cfg.ou, cfg.solver,
                        cfg.sim, cfg.seed)
for d in rep.dominance:
    print(f"{d.a} - {d.b} [{d.metric}] = {d.diff:+.4f}  CI ({d.ci[0]:+.4f}, {d.ci[1]:+.4f}) -> {d.verdict}")

# formation needs the full replication budget: the tolerance band eps scales with the paired SE
for name in ("prop7_under", "prop7_over"):
    report = classify(formation_instance(load_scenario(name)), eps_mult=2.0)
    print(f"{name}: eps = {report.eps:.4f}; efficient = {[sorted(g) for g in report.efficient]}")
    for g in report.stable:
        print(f"  stable {sorted(g)}: {report.classes[g]}")
    for cls in ("under_connected", "over_connected"):
        strict = report.strictly(cls)
        if strict:
            print(f"  strictly {cls} (social shortfall CI above 0): {[sorted(g) for g in strict]}")
