import json

import numpy as np
import pytest

from mmpair.core import (Dataset, GroundTruth, ModalityLayout, ModalitySet, MultimodalSample,
                         compose_projection_check, generate_dataset, load_dataset,
                         make_ground_truth, modality_subsets, pair_label, project_modality,
                         random_nested_pair, random_sample, save_dataset)
from mmpair.errors import LayoutError, PreconditionError, SizeError


def sample(*blocks, label=0, present=None):
    feats = tuple(np.array(b, dtype=float) for b in blocks)
    return MultimodalSample(feats, present or (True,) * len(feats), label)


def test_projection_drops_unselected_modalities():
    x = sample([1, 2], [3], [4, 5])
    y = project_modality(x, ModalitySet((1, 3)))
    assert y.present == (True, False, True)
    assert y.features[0].tolist() == [1, 2] and y.features[2].tolist() == [4, 5]
    assert y.features[1].tolist() == [0.0]


def test_projection_full_set_is_identity(rng):
    layout = ModalityLayout((2, 1, 3))
    for _ in range(20):
        x = random_sample(layout, rng)
        assert project_modality(x, ModalitySet.full(3)) == x


def test_projection_empty_set_keeps_label():
    y = project_modality(sample([1], [2], label=4), ModalitySet())
    assert y.present == (False, False) and y.label == 4


def test_projection_rejects_out_of_range():
    with pytest.raises(LayoutError):
        project_modality(sample([1], [2]), ModalitySet((3,)))


@pytest.mark.parametrize("N,M", [((1,), (1, 2)), ((1, 2), (1, 2)), ((), (2,)), ((), ())])
def test_compose_identity(N, M, rng):
    layout = ModalityLayout((2, 3))
    for _ in range(10):
        assert compose_projection_check(random_sample(layout, rng), ModalitySet(N),
                                        ModalitySet(M))


def test_compose_requires_nesting():
    with pytest.raises(PreconditionError):
        compose_projection_check(sample([1], [2]), ModalitySet((1,)), ModalitySet((2,)))


def test_missing_modality_is_canonical():
    a = MultimodalSample((np.array([5.0]), np.array([1.0])), (False, True), 0)
    b = MultimodalSample((np.array([0.0]), np.array([1.0])), (False, True), 0)
    assert a == b


def test_pair_label():
    assert pair_label(3, 3) == 1
    assert pair_label(0, 1) == -1
    for a in range(3):
        for b in range(3):
            assert pair_label(a, b) == pair_label(b, a)


def test_modality_set_parse():
    assert ModalitySet.parse("all", 3).members == (1, 2, 3)
    assert ModalitySet.parse("3,1", 3).members == (1, 3)
    assert ModalitySet.parse("none", 3).members == ()
    for bad in ("0", "4", "1,1", "x"):
        with pytest.raises(LayoutError):
            ModalitySet.parse(bad, 3)


def test_modality_subsets_count():
    subs = list(modality_subsets(3))
    assert len(subs) == 8 and len({s.members for s in subs}) == 8


def test_random_nested_pair_is_nested(rng):
    for _ in range(50):
        N, M = random_nested_pair(4, rng)
        assert N.issubset(M)


def test_layout_blocks():
    lay = ModalityLayout((2, 1, 3))
    assert lay.total_dim == 6 and lay.offsets == (0, 2, 3, 6)
    assert lay.coordinate_mask(ModalitySet((1, 3))).tolist() == [1, 1, 0, 1, 1, 1]
    assert lay.mask_dim(ModalitySet((2, 3))) == 4


def test_identity_mixing_noiseless_gives_latents():
    lay = ModalityLayout((3,))
    gt = make_ground_truth(lay, latent_dim=3, noise_sigma=0.0, mixing="identity")
    ds = generate_dataset(lay, 50, gt, 4)
    assert np.array_equal(ds.features, ds.latents)


def test_generation_is_deterministic(layout, gt):
    a = generate_dataset(layout, 30, gt, 11)
    b = generate_dataset(layout, 30, gt, 11)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())


def test_generation_is_prefix_stable(layout, gt):
    a = generate_dataset(layout, 10, gt, 5)
    b = generate_dataset(layout, 25, gt, 5)
    assert np.array_equal(a.features, b.features[:10])
    assert np.array_equal(a.labels, b.labels[:10])


def test_balanced_labels(layout, gt):
    # two balanced classes: a 0.05 band is about ten standard deviations at n = 10000
    ds = generate_dataset(layout, 10000, gt, 0)
    freq = np.bincount(ds.labels, minlength=2) / ds.n
    assert np.all((freq >= 0.45) & (freq <= 0.55))


def test_generation_needs_two_samples(layout, gt):
    with pytest.raises(SizeError):
        generate_dataset(layout, 1, gt, 0)


def test_layout_mismatch_is_rejected(gt):
    with pytest.raises(LayoutError):
        generate_dataset(ModalityLayout((2, 2)), 5, gt, 0)


def test_dataset_round_trip(tmp_path, ds):
    p = tmp_path / "d.json"
    save_dataset(ds, p)
    back = load_dataset(p)
    assert np.array_equal(back.features, ds.features)
    assert np.array_equal(back.labels, ds.labels)
    assert np.array_equal(back.latents, ds.latents)
    assert back.ground_truth.to_dict() == ds.ground_truth.to_dict()


def test_ground_truth_round_trip(gt):
    assert GroundTruth.from_dict(gt.to_dict()).to_dict() == gt.to_dict()


def test_dataset_projection_zeroes_columns(ds):
    p = ds.project(ModalitySet((2,)))
    assert np.all(p.features[:, :2] == 0) and np.all(p.features[:, 4:] == 0)
    assert np.array_equal(p.features[:, 2:4], ds.features[:, 2:4])


def test_dataset_from_samples(ds):
    back = Dataset.from_samples(ds.layout, ds.samples)
    assert np.array_equal(back.features, ds.features)
