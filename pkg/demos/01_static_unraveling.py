"""Static path game: when does verifiable information reach the decision maker?

A single expert linked straight to the DM always reveals: silence would be
read as the worst news the expert could hide, so every state is disclosed.
On a path of intermediaries the story depends on bias alignment. If every
relay leans the same way as the expert, the path still unravels. Flip one
relay's bias and it withholds a whole interval of states, so the DM is left
with a residual loss.
"""

from ladderlab.static import GaussianPrior, direct_unraveling, static_path_solve, static_tree_rank

prior = GaussianPrior(mean=0.0, var=1.0)

direct = direct_unraveling(prior, alpha_e=1.0, b_e=0.4)
print(f"direct link: DM loss v0 = {direct.v0}, full disclosure = {direct.full_disclosure}")

aligned = static_path_solve([1.0, 1.0, 1.0], [0.4, 0.2, 0.6], prior)
print(f"aligned path: v0 = {aligned.v0}, blocked = {aligned.blocked_intervals}")

reversing = static_path_solve([1.0, 1.0, 1.0], [0.4, -0.3, 0.6], prior)
print(f"bias-reversing path: v0 = {reversing.v0:.5f}, silent action y = {reversing.y_silent:.5f}")
for k, (lo, hi) in reversing.blocked_intervals.items():
    print(f"  agent {k} withholds states in ({lo:.4f}, {hi:.4f}); width equals twice its |bias|")
print(f"  prior mass of withheld states = {reversing.blocked_measure:.4f}")

rank = static_tree_rank([0.2, 0.5, 0.8], prior, expert_bias=0.4)
worst = min(rank.v0_by_permutation.values())
print(f"all {len(rank.v0_by_permutation)} orderings of an aligned line unravel: worst v0 = {worst}")
