# A small sweep, then aggregate it for plotting.
from mmpair.harness import SweepSpec, run_sweep, write_sweep, read_sweep, plot_data

spec = SweepSpec.from_dict({
    "layout": {"dims": [2, 2, 2]},
    "generator": {"latent_dim": 2, "mixing_seed": 1},
    "n_values": [16, 32],
    "modality_pairs": [[[1], [1, 2]], [[1, 2], [1, 2, 3]]],
    "trials_per_cell": 2,
    "base_seed": 5,
})
rows = run_sweep(spec)
write_sweep(spec, rows, "/tmp/sweep.csv")

table = read_sweep("/tmp/sweep.csv")
for r in table[:4]:
    print(r["n"], r["N_set"], r["M_set"], r["t3_lhs"], r["t3_rhs"], r["t3_holds"])

for n, mean, se in plot_data(table, "bound-gap"):
    print(n, mean, se)
