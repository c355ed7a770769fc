"""Weibull aging with memory across mode switches.

A fault ages under one law in a mild mode. At t=20 the system moves to
a harsher mode. The new law is relocated so the probability already
accumulated is kept, and the predicted fault date moves earlier.
"""

import numpy as np

from interdp.model import WeibullLaw
from interdp.prognoser import predict_fault_date, shift_gamma, weibull_cdf

p_max = 0.3
mild = WeibullLaw(beta=2.0, eta=400.0)
harsh = WeibullLaw(beta=2.0, eta=200.0)

print("date to reach p_max if the mode never changes:", predict_fault_date(mild, 0.0, p_max))

t_switch = 20.0
reached = weibull_cdf(mild, t_switch)
moved = shift_gamma(reached, harsh, t_switch)
print(f"probability at the switch: {reached:.6f}")
print(f"relocated harsh law: gamma = {moved.gamma:.4f}")
print("probability under the relocated law at the switch:", weibull_cdf(moved, t_switch))
print("new predicted date:", predict_fault_date(moved, reached, p_max))

# the cumulative curve is continuous at the switch and steeper afterwards
for t in np.arange(0.0, 140.0, 20.0):
    law = mild if t < t_switch else moved
    print(f"  t={t:6.1f}  F={weibull_cdf(law, t):.4f}")
