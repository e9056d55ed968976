"""CVaR of a small distribution, the epsilon-net approximation, and Iterated-CVaR DP."""
import numpy as np

from icvar_rl import (DiscreteDistribution, EpsNet, cvar_discrete, cvar_eps_net, embed_tabular,
                      icvar_optimal_dp, random_tabular, risk_neutral_dp, var_discrete)

dist = DiscreteDistribution(np.array([0.0, 1.0, 2.0, 3.0]), np.array([0.1, 0.2, 0.3, 0.4]))
for alpha in (0.05, 0.25, 0.5, 1.0):
    print(f"alpha={alpha:4}: VaR={var_discrete(dist, alpha):.3f}  CVaR={cvar_discrete(dist, alpha):.4f}")
print(f"mean = {dist.mean():.4f} (CVaR at alpha = 1)")

# the net-restricted operator on a tabular model embedded as a linear mixture
mdp = embed_tabular(random_tabular(S=4, A=2, H=3, seed=3))
theta = mdp.thetas[0]
V = np.array([0.3, 1.7, 0.05, 2.4])
alpha = 0.3
exact = cvar_discrete(DiscreteDistribution(V, mdp.transitions[0, 0, 0]), alpha)
for eps in (0.5, 0.1, 0.01):
    approx = cvar_eps_net(theta, mdp, V, 0, 0, alpha, EpsNet(eps, mdp.horizon))
    print(f"eps={eps:5}: net CVaR={approx:.5f}  exact={exact:.5f}  error={exact - approx:.2e}")

V_cvar, _, pi_cvar = icvar_optimal_dp(mdp, 0.2)
V_mean, pi_mean = risk_neutral_dp(mdp)
print("risk-averse policy at step 0:", pi_cvar[0], " V1 =", round(V_cvar[0, mdp.initial_state], 4))
print("risk-neutral policy at step 0:", pi_mean[0], " V1 =", round(V_mean[0, mdp.initial_state], 4))
