"""Hyperbolic times along a typical orbit and what they buy.

Run with ``python3 demos/hyperbolic_times.py``.  Takes a few seconds.
"""

import numpy as np

from vianalab import MapParams, PhasePoint
from vianalab.dynamics import orbit
from vianalab.hyptimes import HTParams, detect, expansivity_check, slow_recurrence_profile

mp = MapParams(alpha=0.01)
ht = HTParams(sigma=0.974, delta=0.01)
p = PhasePoint(0.3, 0.2)

rec = orbit(mp, p, 200_000)
rep = detect(rec, ht)
print(f"{len(rep)} hyperbolic times in {rec.n} steps, density {rep.density:.3f}")
print("first few:", rep.times[:12])

# a visit at distance r < delta blocks about |log r| / (b |log sigma|) later
# times, several hundred when sigma is this close to 1, so the density is
# small but stays positive
gaps = np.diff(rep.times)
print(f"gaps: median {np.median(gaps):.0f}, max {gaps.max()}")

# backward contraction at one hyperbolic time
n = int(rep.times[rep.times <= 60][-1])
chk = expansivity_check(mp, p, n, ht, 200, radius=1e-6, search_delta1=True)
half = expansivity_check(mp, p, n, ht, 200, radius=chk.delta1 / 2, rng_seed=1)
print(f"n={n}: delta1={chk.delta1:.4f}, at delta1/2 {half.fraction_ok:.1%} of "
      f"{half.ratios.size} (pair, k) instances contract by sigma^(k/2)")

prof = slow_recurrence_profile(rec, gamma=0.1)
print(f"slow recurrence: delta={prof.delta} gives average -log dist_delta "
      f"{prof.averages[list(prof.deltas).index(prof.delta)]:.4f} <= 0.05")
