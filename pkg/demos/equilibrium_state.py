"""Measure of maximal entropy on a Ulam graph, against the competitors.

Run with ``python3 demos/equilibrium_state.py``.  Takes about 15 s.
"""

import math

from vianalab import MapParams
from vianalab.exponents import ThermoConstants, exponent_survey
from vianalab.thermo import (
    Candidate, gap_check, mme_candidate, periodic_orbit_candidates, pressure_refinement,
)
from vianalab.ulam import Grid, build_ulam, entropy_pesin, measure_exponents, stationary

mp = MapParams(alpha=0.01)
tc = ThermoConstants.from_survey(exponent_survey(mp, 100, 100_000, rng_seed=0), mp.d)

g = Grid.uniform(256, 512, mp.beta)
T = build_ulam(mp, g, 64, rng_seed=0)
acim = stationary(T)
ex = measure_exponents(mp, acim)
h_acim = entropy_pesin(ex)
print(f"a.c.i.m. proxy: lambda_c={ex.lambda_c:.4f}, Pesin entropy {h_acim:.4f} "
      f">= log(d-eps)+c0 = {math.log(mp.d - tc.eps) + tc.c0:.4f}")

rep = mme_candidate(mp, g, None, tc, transition=T)
print(f"max-entropy candidate: h={rep.entropy:.4f} (log 16 + log 2 = "
      f"{math.log(16) + math.log(2):.4f}), lambda_c={rep.exponents.lambda_c:.4f}")

cands = [rep.candidate(), *periodic_orbit_candidates(mp, 12, grid=g),
         Candidate("acim_proxy", h_acim, 0.0, ex.lambda_c, ex.lambda_u)]
gap = gap_check(cands, tc)
for e in gap.entries:
    tag = "K" if e["in_K"] else "outside K"
    print(f"  {e['name']:<28} h={e['entropy']:.4f} lambda_c={e['lambda_c']:+.4f} {tag}")
print(f"gap check {'passes' if gap.passed else 'fails'}: every measure outside K trails by "
      f">= kappa0 = {tc.kappa0:.4f}")

# the graph pressure is a finite stand-in; watch it under refinement
for row in pressure_refinement(mp, [(32, 64), (64, 128), (128, 256)]):
    print(f"  {row['n_theta']:>4} x {row['n_x']:<4} pressure {row['pressure']:.5f}")
