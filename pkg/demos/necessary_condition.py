"""Where the conjectured necessary condition kicks in.

For a fixed QBER the repetition code beats Eve's guess once the overlap
drops below eps/(1-eps).  The pretty-good fidelity is never larger than
the fidelity, so it passes for more states.
"""
from fidbound import OverlapMeasure, necessary_condition
from fidbound.analysis import epsilon_ratio

eps = 0.08
print("critical overlap:", round(epsilon_ratio(eps), 5))

for value in (0.05, 0.0869, 0.09, 0.2):
    for n in (1, 5, 25):
        res = necessary_condition(OverlapMeasure("fidelity", value), eps, n)
        print(f"Q={value:<6} n={n:<3} eve bound {res.eve_error_bound:.3e}"
              f"  bob {res.bob_error:.3e}  holds={res.condition_holds}")

# a pair of pure states: pretty-good fidelity is the square of the fidelity
fid = 0.25
pg = fid ** 2
for kind, value in (("fidelity", fid), ("pg", pg)):
    print(kind, necessary_condition(OverlapMeasure(kind, value), eps, 3).condition_holds)
