"""Certified fidelity bound for scenario (c) against depolarizing noise.

Uses a small envelope (m=4) and NPA level 2 so the sweep runs in seconds;
pass ``--full`` for the production setting m=8, level 3.
"""
import sys

import numpy as np

from fidbound import fidelity_curve

full = "--full" in sys.argv
order, level = (8, 3) if full else (4, 2)

points = fidelity_curve("c", np.arange(0.0, 0.101, 0.01), order=order, level=level)

print(f"scenario c, m={order}, level {level}")
print(f"{'q':>6} {'eps':>8} {'F_lb':>8} {'sqrt(e/(1-e))':>14}  ok")
for p in points:
    print(f"{p.q:6.3f} {p.eps:8.4f} {p.fid_lb:8.4f} {p.sqrt_eps_ratio:14.4f}  {'yes' if p.condition else 'no'}")

passing = [p.q for p in points if p.condition]
print("largest passing q on this grid:", max(passing) if passing else None)
