# Fit the diagonal metric on nested masks and compare the two risk estimators.
from mmpair import ModalityLayout, ModalitySet, make_ground_truth, generate_dataset
from mmpair import LossSpec, MetricConfig, TrainConfig, train, train_nested
from mmpair import ustat_risk, block_risk

layout = ModalityLayout((2, 2, 2))
gt = make_ground_truth(layout, seed=1)
ds = generate_dataset(layout, 64, gt, seed=3)
mc = MetricConfig.from_data(ds)
spec = LossSpec.for_config(mc, layout.total_dim)
print(mc, spec)

res = train(ds, ModalitySet((1, 2, 3)), spec, TrainConfig(max_iters=500), mc)
print(res.final_empirical_risk, res.iters_used, res.converged)
print(res.model.lambdas.round(3), round(res.model.bias, 3))

print("ustat", ustat_risk(spec, res.model, ds).value)
print("block", block_risk(spec, res.model, ds).value)

# warm start from the smaller mask: the larger one never does worse
r_N, r_M = train_nested(ds, ModalitySet((1,)), ModalitySet((1, 2, 3)), spec,
                        TrainConfig(max_iters=300), mc)
print(r_N.final_empirical_risk, ">=", r_M.final_empirical_risk)
