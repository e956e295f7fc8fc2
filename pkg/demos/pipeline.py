"""End-to-end run: simulate, fit, budget, extract.

One honest protocol run of a million rounds, followed by the min-tradeoff
fit for its acceptance region and Toeplitz hashing of the raw bits.

Run with ``python demos/pipeline.py`` (uses the cached envelope).
"""

import numpy as np

from sdirand.cache import load_or_build
from sdirand.envelope import Gridding
from sdirand.extractor import block_seed_length, extract_blocks, output_length
from sdirand.rates import (
    ProtocolParams,
    eat_min_entropy,
    fit_min_tradeoff,
    optimize_widths,
    rate_grid_3d,
    tradeoff_grid,
)
from sdirand.simulator import DeviceModel, run_protocol

_, env, _ = load_or_build(0.5, Gridding.uniform(0.5, 1.0, 51))

# ---------------------------------------------------------------------------
# Plan the run: pick widths before looking at any data.
params = ProtocolParams(n=10 ** 6, gamma=0.1, theta_exp=0.9, omega_exp=0.8)
dw, dt = optimize_widths(params, env)
params = params.replace(delta_omega=dw, delta_theta=dt)
print(f"accept if omega_# >= {0.8 - dw:.4f} and Theta_# >= {0.9 - dt:.4f}")

# ---------------------------------------------------------------------------
# Simulate.  The device is the honest qubit strategy; one seed drives all
# randomness so the run is reproducible.
device = DeviceModel("qubit", theta=0.9)
transcript, scores, aborted = run_protocol(params, device, seed=2024)
print(f"observed omega_# = {scores.omega_hash:.4f}, Theta_# = {scores.theta_hash:.4f}, "
      f"aborted = {aborted}")
if aborted:
    raise SystemExit("the run aborted; nothing to extract")

# ---------------------------------------------------------------------------
# Fit the min-tradeoff function at the worst accepted statistics.  The rate
# grid is (gamma, omega, theta); an affine f below it certifies every
# accepted run, and entropy accumulation turns f into a min-entropy bound.
grid = tradeoff_grid(params.gamma)
f = fit_min_tradeoff(grid, rate_grid_3d(env, grid), (params.gamma, 0.8 - dw, 0.9 - dt),
                     gamma_protocol=params.gamma)
h_min = eat_min_entropy(params, f)
m = output_length(max(h_min, 0.0), params.eps_ext)
print(f"f at the acceptance corner {f((params.gamma, 0.8 - dw, 0.9 - dt)):.4f} bits/round; "
      f"smooth min-entropy {h_min:.0f} bits; output {m} bits")

# ---------------------------------------------------------------------------
# Extract.  The raw string is (X, Y, T) per round; it is hashed block by
# block with a Toeplitz matrix drawn from a separate seed.
raw = transcript.output_bits()
seed_bits = np.random.default_rng(7).integers(0, 2, block_seed_length(raw.size, m), dtype=np.uint8)
out = extract_blocks(raw, seed_bits, m)
print(f"extracted {out.size} bits from {raw.size}; fraction of ones {out.mean():.4f}")
