import numpy as np
import pytest

from massmanip.connet import (ConNetModel, ContactMap, connet_train_step,
                              effective_contact_sets, estimate_contacts, load_con, save_con)
from massmanip.diffusion import Condition
from massmanip.errors import ConfigError, ShapeError, UntrainedModelError
from massmanip.numerics import rng
from massmanip.trajdiff import ObjectTrajectory


def _toy_inputs(n=12, seed=0):
    g = rng.stream(seed, 90)
    joints = g.normal(0, 0.1, (n, 126)).astype(np.float32)
    poses = ObjectTrajectory.stationary(n).poses
    return joints, poses


def test_outputs_in_unit_interval():
    model = ConNetModel(n_vertices=8, hidden=16, seed=0)
    joints, poses = _toy_inputs()
    labels = np.zeros((12, 8))
    connet_train_step(model, joints, poses, 1.0, 0, labels)
    cmap = estimate_contacts(model, joints, poses, Condition(m=1.0, a=np.eye(6)[0]))
    assert cmap.b.min() >= 0.0 and cmap.b.max() <= 1.0
    assert cmap.b.shape == (12, 8)


def test_untrained_model_aborts():
    model = ConNetModel(n_vertices=8, seed=1)
    joints, poses = _toy_inputs()
    with pytest.raises(UntrainedModelError):
        estimate_contacts(model, joints, poses, Condition(m=1.0))


def test_frame_mismatch_rejected():
    model = ConNetModel(n_vertices=8, seed=1)
    joints, _ = _toy_inputs()
    poses = ObjectTrajectory.stationary(7).poses
    with pytest.raises(ShapeError):
        connet_train_step(model, joints, poses, 1.0, 0, np.zeros((12, 8)))


def test_item_order_independence():
    model = ConNetModel(n_vertices=8, hidden=16, seed=2)
    j1, poses = _toy_inputs(seed=3)
    j2, _ = _toy_inputs(seed=4)
    connet_train_step(model, j1, poses, 1.0, 0, np.zeros((12, 8)))
    c = Condition(m=2.0)
    out_a = [estimate_contacts(model, j, poses, c).b for j in (j1, j2)]
    out_b = [estimate_contacts(model, j, poses, c).b for j in (j2, j1)]
    np.testing.assert_array_equal(out_a[0], out_b[1])
    np.testing.assert_array_equal(out_a[1], out_b[0])


def test_bce_half_predictions_closed_form():
    # zero weights everywhere -> sigmoid(0) = 0.5 -> BCE = ln 2 per element
    model = ConNetModel(n_vertices=8, hidden=16, seed=5)
    for k in model.params:
        model.params[k][:] = 0.0
    joints, poses = _toy_inputs(seed=6)
    labels = (rng.stream(11).uniform(size=(12, 8)) > 0.5).astype(np.float64)
    loss = connet_train_step(model, joints, poses, 1.0, 1, labels)
    assert loss == pytest.approx(np.log(2.0), rel=1e-5)


def test_bce_perfect_predictions_near_zero():
    model = ConNetModel(n_vertices=8, hidden=16, seed=7)
    for k in model.params:
        model.params[k][:] = 0.0
    model.params["b3"][:] = 30.0  # saturate sigmoid at ~1
    joints, poses = _toy_inputs(seed=8)
    labels = np.ones((12, 8))
    loss = connet_train_step(model, joints, poses, 1.0, 1, labels)
    assert loss < 1e-4
    assert loss < np.log(2.0)  # perfect predictor beats the 0.5 constant


def test_labels_must_be_binary():
    model = ConNetModel(n_vertices=8, seed=9)
    joints, poses = _toy_inputs()
    with pytest.raises(ConfigError):
        connet_train_step(model, joints, poses, 1.0, 0, np.full((12, 8), 0.5))


def test_training_separable_toy():
    # light mass -> first half of vertices in contact, heavy -> second half
    model = ConNetModel(n_vertices=8, hidden=32, lr=1e-2, seed=10)
    n = 12
    joints, poses = _toy_inputs(seed=12)
    lab_light = np.zeros((n, 8)); lab_light[:, :4] = 1
    lab_heavy = np.zeros((n, 8)); lab_heavy[:, 4:] = 1
    losses = []
    for i in range(500):
        if i % 2 == 0:
            losses.append(connet_train_step(model, joints, poses, 0.175, 0, lab_light))
        else:
            losses.append(connet_train_step(model, joints, poses, 4.9, 0, lab_heavy))
    assert np.mean(losses[-10:]) < 0.1


def test_effective_contact_sets_empty_and_singleton():
    cmap = ContactMap(np.zeros((3, 5)))
    assert all(len(s) == 0 for s in effective_contact_sets(cmap))
    b = np.zeros((3, 5)); b[1, 2] = 0.9
    sets = effective_contact_sets(ContactMap(b))
    assert len(sets[0]) == 0 and list(sets[1]) == [2] and len(sets[2]) == 0


def test_effective_contact_sets_matches_bruteforce():
    g = rng.stream(13)
    b = g.uniform(size=(6, 9)).astype(np.float32)
    sets = effective_contact_sets(ContactMap(b), threshold=0.5)
    for i in range(6):
        expected = [j for j in range(9) if b[i, j] > 0.5]
        assert list(sets[i]) == expected


def test_threshold_monotonicity():
    g = rng.stream(14)
    cmap = ContactMap(g.uniform(size=(4, 7)).astype(np.float32))
    low = effective_contact_sets(cmap, threshold=0.3)
    high = effective_contact_sets(cmap, threshold=0.7)
    for lo, hi in zip(low, high):
        assert set(hi).issubset(set(lo))


def test_contact_map_validation():
    with pytest.raises(ShapeError):
        ContactMap(np.array([[1.5, 0.0]]))


def test_con_roundtrip(tmp_path):
    cmap = ContactMap(rng.stream(15).uniform(size=(5, 6)).astype(np.float32))
    p = tmp_path / "c.con"
    save_con(p, cmap)
    back = load_con(p)
    np.testing.assert_array_equal(back.b, cmap.b)
