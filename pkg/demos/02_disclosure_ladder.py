"""One relay's disclosure ladder.

In continuous time a relay holding evidence can only pass it on at Poisson
opportunities, and only while its disclosure clock is on. It weighs moving
the DM's belief (which it likes only when the move favours its bias) against
reputational capital, which rises when it discloses and drifts down when it
stays silent while the public expects disclosure. The solution is a ladder:
for each reputation level a belief interval where the relay waits, with
disclosure outside it. The relay also waits where it would disclose but
keeps its clock off, so the waiting band combines both layers. A higher
reputational weight narrows it.
"""

import numpy as np

from ladderlab.model import INTERMEDIARY, AgentSpec, OUParams, ReputationParams, SolverSettings
from ladderlab.qvi import extract_ladder, solve_qvi

ou = OUParams(kappa=1.0, xbar=0.0, sigma=1.0, rho=0.1)
settings = SolverSettings(m_grid=201, r_grid=11)

for beta in (0.02, 0.1, 0.4):
    relay = AgentSpec(2, INTERMEDIARY, alpha=1.0, bias=0.4, beta=beta, lambda_bar=1.0, rep=ReputationParams())
    sol = solve_qvi(relay, ou, settings=settings)
    ladder = extract_ladder(sol, settings)
    mid = len(ladder.r) // 2
    width = ladder.inaction_width()[mid]
    cuts = ", ".join(f"{t:+.3f}" for t in ladder.action_thresholds(mid)[0])
    print(f"beta = {beta:<5} residual {sol.max_residual:.1e}  waiting-band edges at R = {ladder.r[mid]:.2f}:"
          f" [{cuts}]  width {width:.3f}")

print("rows of the last ladder (reputation -> waiting-band width):")
for r, w in zip(ladder.r[::2], np.asarray(ladder.inaction_width())[::2]):
    print(f"  R = {r:.2f}: {w:.3f}")
