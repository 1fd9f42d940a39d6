"""
How small must the delay be?
============================

The consensus theorem only applies below an explicit delay threshold that
depends on psi(2R). For the ten-agent example the threshold is tiny,
which is why the demo runs with delays of 1 to 50 lie far outside it.
"""

import numpy as np

from delayhk import ModelConfig
from delayhk.experiments import PRESET_HISTORY
from delayhk.theory import TheoryInputs, beta_window, bounds_report, delay_bound

cfg = ModelConfig.build(np.array(PRESET_HISTORY)[:, None], beta=1.0, tau=1.0)
for key, val in bounds_report(cfg).items():
    print(f"{key:22s} {val}")

# %%
# Shrinking the opinions shrinks R, raises psi(2R) and loosens the bound.
for radius in (10.0, 1.0, 0.1):
    inp = TheoryInputs.from_config(cfg, radius_override=radius)
    bound = delay_bound(inp)
    print(f"R = {radius:5g}: delay bound {bound:.3e}, "
          f"weight window at half the bound {beta_window(inp, 0.5 * bound)}")
