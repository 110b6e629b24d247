# Synthetic multimodal data and modality masks.
import numpy as np
from mmpair import ModalityLayout, ModalitySet, make_ground_truth, generate_dataset
from mmpair import project_modality, compose_projection_check

layout = ModalityLayout((2, 2, 2))  # three modalities, two features each
gt = make_ground_truth(layout, seed=1)
ds = generate_dataset(layout, 12, gt, seed=7)
print(ds.features.shape, ds.labels[:6])

# drop modality 3: its features become zeros and its presence flag goes False
x = ds.samples[0]
xp = project_modality(x, ModalitySet((1, 2)))
print(x.features, "->", xp.features, xp.present)

# projecting twice equals projecting onto the smaller mask
print(compose_projection_check(x, ModalitySet((1,)), ModalitySet((1, 2))))

# the first 12 samples do not depend on how many are drawn
big = generate_dataset(layout, 50, gt, seed=7)
print(np.array_equal(big.features[:12], ds.features))
