"""Certified asymptotic rates on the (score, overlap) plane.

Walks from a single certified bound to the convex envelope that every rate
is read from, then prints a few rate curves.

Run with ``python demos/asymptotic_rates.py``.  The first run builds the
51 x 51 envelope (a few minutes) and caches it; later runs load it.
"""

import numpy as np

from sdirand.cache import load_or_build
from sdirand.envelope import Gridding
from sdirand.qubit import RateQuery, classical_boundary, g_lower, quantum_max_score
from sdirand.rates import asymptotic_rate

# ---------------------------------------------------------------------------
# 1. One certified point.
#
# g_lower runs branch and bound over qubit strategies.  It returns a lower
# bound on the conditional entropy and a feasible strategy whose entropy
# upper-bounds the optimum; the two are within ``tol`` bits.  At score 0.8
# and overlap 0.9 the only feasible strategy is the honest qubit one, so
# both numbers sit at h(0.8).
r = g_lower(RateQuery(omega=0.8, theta=0.9))
print(f"G(0.8, 0.9): certified {r.certified_lower:.4f}, witness {r.witness_value:.4f}, "
      f"{r.boxes_explored} boxes")

# Below the classical line a mixing strategy reaches the same statistics
# with zero entropy, and beyond the quantum line nothing does.
th = 0.85
print(f"Theta = {th}: zero for omega <= {classical_boundary(th):.3f}, "
      f"infeasible above {quantum_max_score(th):.3f}")
print("  omega = 0.60 ->", g_lower(RateQuery(0.60, th)).certified_lower)
print("  omega = 0.90 -> proven infeasible:", g_lower(RateQuery(0.90, th)).infeasible)

# ---------------------------------------------------------------------------
# 2. The envelope.
#
# Certified values on a grid are shifted one cell towards smaller
# (omega, theta) so that any query is bounded by a grid sample, then
# convexified.  The result is a valid lower bound everywhere on the grid
# domain and is what the protocol rates use.
surface, env, hit = load_or_build(0.5, Gridding.uniform(0.5, 1.0, 51))
print(f"\nenvelope {'loaded from cache' if hit else 'built'}; "
      f"{int(surface.flags.sum())} grid points stopped on their budget")
print(f"F(0.8, 0.9) = {float(env(0.8, 0.9)):.4f}")

# ---------------------------------------------------------------------------
# 3. Rate curves.
#
# At a fixed overlap the rate climbs with the score until the quantum
# boundary, where the curve stops.  Queries past the boundary are never
# made: the envelope would extrapolate there.
for th in (0.7, 0.8, 0.9):
    om = np.linspace(classical_boundary(th), quantum_max_score(th), 6)
    rates = [asymptotic_rate("r1", env, float(o), th, 0.0, 0.5) for o in om]
    cells = "  ".join(f"{o:.3f}:{v:.3f}" for o, v in zip(om, rates))
    print(f"Theta = {th}: {cells}")
