"""Net randomness expansion as a function of the number of rounds.

For an honest qubit device at overlap 0.9, this sweeps n and shows where
the finite-size penalty stops swallowing the rate.

Run with ``python demos/finite_size.py`` (uses the cached envelope).
"""

from sdirand.cache import load_or_build
from sdirand.envelope import Gridding
from sdirand.rates import ProtocolParams, completeness_error, expansion_curve

_, env, _ = load_or_build(0.5, Gridding.uniform(0.5, 1.0, 51))

# ProtocolParams carries the round count, the test rate gamma, the expected
# statistics and the error budgets.  omega_exp defaults to the honest score.
base = ProtocolParams(n=10 ** 4, gamma=0.1, theta_exp=0.9, omega_exp=0.8,
                      eps_c=1e-3, eps_s=1e-6)

# For each n, the acceptance widths are chosen to keep the honest abort
# probability under eps_c while giving up as little rate as possible; the
# min-tradeoff function is then fitted at the worst accepted statistics
# and the entropy accumulation bound is converted to a net rate.
ns = [10 ** k for k in range(4, 11)]
rows = expansion_curve(base, ns, env)
print(f"{'n':>12} {'net rate':>10} {'d_omega':>9} {'d_theta':>9} {'eps_c':>9}")
for r in rows:
    print(f"{r['n']:>12} {r['net_rate']:>10.4f} {r['delta_omega']:>9.5f} "
          f"{r['delta_theta']:>9.5f} {r['eps_c']:>9.1e}")
print(f"asymptote (1 - gamma) F = {rows[-1]['rate_asymptotic']:.4f}")

# The widths shrink like 1/sqrt(n); the completeness bound stays pinned at
# its target.
p = base.replace(n=ns[-1], delta_omega=rows[-1]["delta_omega"],
                 delta_theta=rows[-1]["delta_theta"])
print(f"completeness at n = 1e10: {completeness_error(p):.2e}")
