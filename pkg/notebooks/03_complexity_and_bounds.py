# Rademacher estimates and the closed-form bounds.
import math

from mmpair import ModalitySet, generate_dataset, rademacher_mc, massart_bound
from mmpair import theorem5_bound, theorem6_gap
from mmpair.bounds import grid_loss_table
from mmpair.risk import sobol_grid
from mmpair.verify import reference_setup

layout, gt, mc, spec = reference_setup()
mask = ModalitySet((1, 2, 3))
grid = sobol_grid(mc, layout, mask, size=256)

for n in (32, 128, 512):
    ds = generate_dataset(layout, n, gt, seed=n)
    est = rademacher_mc(ds, spec, grid, mc_trials=1000, seed=0)
    table = grid_loss_table(ds, spec, grid)
    print(n, round(est.value, 4), round(est.stderr, 4), round(massart_bound(table), 4))

# closed form: D sqrt(2 log(kappa / (D^m B^2))) / (n // 2)
print(theorem5_bound(1.0, math.e ** 2, 1.0, 1, 10).rhs)   # 0.4
print(theorem5_bound(2.0, 18.0, 1.5, 3, 10).validity_flags)  # log argument exactly one

# gap between masks of 2 and 1 feature dimensions, about 1.2619
print(theorem6_gap(2, 1, 2.0, 32.0, 1.0, 0.5, 0.5, 4).rhs)
