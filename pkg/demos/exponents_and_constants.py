"""Exponents of the weakly coupled skew product and the constants they fix.

Run with ``python3 demos/exponents_and_constants.py``.  Takes about 10 s.
"""

import math

import numpy as np

from vianalab import MapParams, PhasePoint
from vianalab.exponents import ThermoConstants, exponent_survey, lyapunov_qr, lyapunov_split

mp = MapParams(alpha=0.01)
print(f"map: d={mp.d}, a0={mp.a0:.15f}, alpha={mp.alpha}, beta={mp.beta:.6f}")

# one long orbit, two independent estimators
p = PhasePoint(0.2, 0.3)
qr = lyapunov_qr(mp, p, 1_000_000)
sp = lyapunov_split(mp, p, 1_000_000)
print(f"QR    lambda_u={qr.lambda_u:.10f} lambda_c={qr.lambda_c:.6f} +- {qr.stderr_c:.1e}")
print(f"split lambda_u={sp.lambda_u:.10f} lambda_c={sp.lambda_c:.6f} +- {sp.stderr_c:.1e}")
print(f"log d = {math.log(mp.d):.10f}")

# Lebesgue-random survey: the 1st percentile of lambda_c is the working c0
s = exponent_survey(mp, 200, 100_000, rng_seed=1)
print(f"survey: {s.fraction_positive:.0%} positive, c0={s.c0:.5f}, "
      f"median lambda_c={np.median(s.lambda_c):.5f}, max |lambda_u - log d|="
      f"{np.max(np.abs(s.lambda_u - math.log(mp.d))):.1e}")

tc = ThermoConstants.from_survey(s, mp.d)
print(f"eps={tc.eps:g} zeta={tc.zeta:.5f} sigma={tc.sigma:.6f} "
      f"K threshold={tc.k_threshold:.5f} kappa0={tc.kappa0:.5f}")

# the literal quotient form of the distortion term would need c0 > 1
lit = ThermoConstants(c0=s.c0, eps=tc.eps, d=mp.d, form="literal")
print(f"literal form: zeta={lit.zeta:.5f} (undefined constants when <= 0)")
