"""Item characteristic curves for the four response models.

Evaluates each curve on a grid of abilities for one item and prints a small
table. Note how the 3PL floor and the 4PL ceiling pull the curve away from
the 2PL shape, and how the 1PL crosses 0.5 exactly at the difficulty.

    python3 demos/icc_curves.py
"""

import numpy as np

from irt_forge import icc_1pl, icc_2pl, icc_3pl, icc_4pl_feasibility

b, a, c, lam = 0.5, 1.8, 0.2, 0.85
theta = np.linspace(-4, 4, 9)

curves = {
    "1pl": icc_1pl(theta, b),
    "2pl": icc_2pl(theta, a, b),
    "3pl": icc_3pl(theta, a, b, c),
    "4pl": icc_4pl_feasibility(theta, a, b, lam),
}

print(f"difficulty {b}, discrimination {a}, guessing {c}, feasibility {lam}")
print("theta  " + "  ".join(f"{name:>6}" for name in curves))
for k, t in enumerate(theta):
    print(f"{t:5.1f}  " + "  ".join(f"{p[k]:6.3f}" for p in curves.values()))

# the lower asymptote of the 3PL and the upper asymptote of the 4PL
print("3pl at theta=-50:", icc_3pl(-50.0, a, b, c))
print("4pl at theta=+50:", icc_4pl_feasibility(50.0, a, b, lam))
