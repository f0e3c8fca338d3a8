"""Evaluate the linearized optimal-position rule and run it on a wealth path.

The rule has two parts: a mean-variance term proportional to the excess
return, and a hedging term driven by the correlation between price and
variance shocks.  Both come from the expansion of the marginal value of
wealth, V_x ~ alpha0 + alpha1*x + alpha2*sigma_bar.
"""

import numpy as np

from portvol import (
    HestonParams,
    PathConfig,
    PolicyCoefficients,
    optimal_policy,
    simulate_market_path,
    simulate_wealth_path,
)

params = HestonParams(mu=0.08, r=0.02, alpha=0.08, beta_rev=2.0, gamma=0.3, rho=-0.5, sigma_bar=0.04)
coeffs = PolicyCoefficients(alpha0=1.0, alpha1=-2.0, alpha2=0.5)

print("position as a function of wealth at sigma_bar = 0.04:")
for x in (0.5, 1.0, 2.0):
    print(f"  x = {x:4.1f} -> pi* = {optimal_policy(x, 0.04, coeffs, params):+.4f}")

print("\nposition as a function of instantaneous variance at x = 1:")
for v in (0.01, 0.04, 0.16):
    print(f"  v = {v:5.2f} -> pi* = {optimal_policy(1.0, v, coeffs, params):+.4f}")

# With mu = r the mean-variance term drops and only the hedge remains.
flat = HestonParams(mu=0.02, r=0.02, alpha=0.08, beta_rev=2.0, gamma=0.3, rho=-0.5, sigma_bar=0.04)
print(f"\nhedging demand alone (mu = r): pi* = {optimal_policy(1.0, 0.04, coeffs, flat):+.6f}")

# Run the rule along one simulated market path.
config = PathConfig(horizon=1.0, dt=1 / 250, seed=3)
market = simulate_market_path(params, config, path_index=0)
path = simulate_wealth_path(market, coeffs, params, x0=1.0)
print(f"\nwealth path over {config.horizon} year at dt = 1/250:")
print(f"  terminal wealth   = {path.wealth[-1]:.4f}")
print(f"  position range    = [{path.policy.min():+.4f}, {path.policy.max():+.4f}]")
print(f"  cash allocation   = [{path.risk_free_holding.min():+.4f}, {path.risk_free_holding.max():+.4f}]")
print(f"  wealth-position sample corr = {np.corrcoef(path.wealth, path.policy)[0, 1]:+.3f}")
