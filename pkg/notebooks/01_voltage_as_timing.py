"""
Reading spike timing off a membrane potential
=============================================

A LIF neuron under constant drive fires periodically, so its potential at
any instant says how long ago it fired and how soon it will fire again.
This script walks that mapping and turns it into a weight-change window.
"""

import numpy as np

from vdsp.theory import (
    WindowParams,
    abs_delta_t,
    branch_boundary,
    potentiation_halfwidth,
    signed_delta_t,
    vdsp_equivalent_window,
    window_scan,
)

###############################################################################
# Potentials between reset (-1) and threshold (1) for a drive of 1.5.
p = WindowParams(i_drive=1.5, tau_m=30.0, tau_plus=30.0, tau_minus=30.0)
v = np.array([-1.0, -0.5, 0.0, branch_boundary(p) - 1e-9, 0.5, 0.9])
for vi, d, s in zip(v, abs_delta_t(v, p), signed_delta_t(v, p)):
    print(f"v={vi:+.3f}  nearest pre spike {d:6.2f} ms  signed {s:+7.2f} ms")

###############################################################################
# The same numbers as a window: potentiation near reset, depression near
# threshold, with the switch at I - sqrt((I - v_reset)(I - v_th)).
print("boundary potential:", round(branch_boundary(p), 4))
print("window values:", np.round(vdsp_equivalent_window(v, p), 4))

###############################################################################
# Stronger drive means a faster neuron and a narrower window.
for i in (1.2, 1.5, 3.0):
    rows = window_scan(WindowParams(i_drive=i), np.linspace(-1, 0.999, 400))
    print(f"I={i}: potentiation side reaches {potentiation_halfwidth(rows):.1f} ms")
