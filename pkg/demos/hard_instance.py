"""The lower-bound instance: closed-form values against DP, and the per-action gaps."""
from icvar_rl import hard_instance, hard_instance_gap, hard_instance_value, icvar_optimal_dp, make_hard_params
from icvar_rl.instance_gen import hard_actions

p = make_hard_params(d=3, H=5, n=2, alpha=0.5, K=20000, seed=1)
mdp = hard_instance(p)
V, _, pi = icvar_optimal_dp(mdp, p.alpha)
print(f"delta={p.delta:.5f}  mu={p.mu}")
print(f"V1 closed form {hard_instance_value(p):.12f}")
print(f"V1 by DP       {V[0, mdp.initial_state]:.12f}")
for a in hard_actions(p.d):
    print(f"action {a}: gap {hard_instance_gap(p, a):.6f}")
