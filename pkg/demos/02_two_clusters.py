"""
Sharper kernels split the group
===============================

With psi(r) = (1 + r^2)^-3 distant agents barely hear each other and the
population settles into separate opinion groups instead of one consensus.
"""

from delayhk import experiments
from delayhk.diagnostics import count_clusters

cfg = experiments.preset_configs("fig2", delays=(1.0,))[0]
bundle = experiments.run(cfg, write=False)
final = bundle.trajectory.x[-1, :, 0]

print("final opinions:", sorted(round(float(v), 3) for v in final))
print("groups separated by more than 1:", count_clusters(final, 1.0))

# %%
# The same model with normalized rates (every agent's weights average to
# one) is the fig4 preset. Try ``experiments.run_preset("fig4")`` to see the
# groups for every delay.
