import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pnal_lab.model import (CE, LossKind, ModelParams, backward, forward, init_params, load_params,
                            loss_and_grad, predict, save_params, sgd_step, softmax, zeros_like, _forward)

LOSSES = [LossKind("ce"), LossKind("gce"), LossKind("sce")]


def fd_check(params, x, y, mask, kind, h=1e-5):
    """Largest relative error of the analytic gradient against central differences."""
    res = loss_and_grad(params, x, y, mask, kind)
    num, ana = [], []
    for name, arr, g in zip(ModelParams.names(), params.arrays(), res.grad.arrays()):
        flat = arr.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            lp = loss_and_grad(params, x, y, mask, kind).loss
            flat[i] = old - h
            lm = loss_and_grad(params, x, y, mask, kind).loss
            flat[i] = old
            num.append((lp - lm) / (2 * h))
        ana.append(g.reshape(-1))
    num, ana = np.array(num), np.concatenate(ana)
    return np.linalg.norm(num - ana) / max(np.linalg.norm(num) + np.linalg.norm(ana), 1e-12)


def small_instance(seed, m=4, h=5, n=7):
    rng = np.random.default_rng(seed)
    p = init_params(m, h, seed=seed)
    p = p.map(lambda a: a + rng.normal(scale=0.3, size=a.shape))
    x = rng.normal(size=(n, 9))
    y = rng.integers(0, m, n)
    mask = (rng.random(n) < 0.7).astype(float)
    mask[0] = 1
    return p, x, y, mask


@pytest.mark.parametrize("kind", LOSSES, ids=lambda k: k.name)
@pytest.mark.parametrize("seed", range(3))
def test_gradients_match_finite_differences(kind, seed):
    p, x, y, mask = small_instance(seed)
    assert fd_check(p, x, y, mask, kind) <= 1e-4


def test_zero_params_uniform():
    p = zeros_like(init_params(6, 8))
    probs = forward(p, np.random.default_rng(0).normal(size=(5, 9)))
    assert np.allclose(probs, 1 / 6)


@given(st.integers(0, 10_000))
def test_rows_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    p = init_params(5, 16, seed=seed).map(lambda a: a * 3)
    probs = forward(p, rng.normal(scale=3, size=(20, 9)))
    assert np.all(probs >= 0) and np.allclose(probs.sum(1), 1, atol=1e-9)


def test_softmax_shift_invariance():
    z = np.random.default_rng(0).normal(size=(4, 6))
    assert np.allclose(softmax(z), softmax(z + np.arange(4)[:, None] * 100.0))


def test_non_finite_input_rejected():
    with pytest.raises(ValueError):
        forward(init_params(3), np.full((1, 9), np.nan))


def test_uniform_ce_is_log_m():
    p = zeros_like(init_params(6, 4))
    r = loss_and_grad(p, np.ones((3, 9)), [0, 1, 5])
    assert abs(r.loss - np.log(6)) < 1e-12 and abs(r.loss - 1.79176) < 1e-5


def test_perfect_prediction_ce_zero():
    p = zeros_like(init_params(3, 4))
    p.b3[:] = [0, 800, 0]
    assert loss_and_grad(p, np.zeros((2, 9)), [1, 1]).loss == 0.0


def test_loss_values():
    p = zeros_like(init_params(4, 3))
    x, y = np.zeros((1, 9)), [2]
    assert np.isclose(loss_and_grad(p, x, y, kind=LossKind("gce", q_gce=0.5)).loss, (1 - 0.25 ** 0.5) / 0.5)
    sce = LossKind("sce", alpha=0.1, beta=1.0, log_zero_floor=-4.0)
    assert np.isclose(loss_and_grad(p, x, y, kind=sce).loss, 0.1 * np.log(4) + 4 * 0.75)


def test_all_zero_mask():
    p = init_params(3, 4)
    r = loss_and_grad(p, np.ones((4, 9)), [0, 1, 2, 0], mask=np.zeros(4))
    assert r.loss == 0.0 and r.n_active == 0
    assert all(np.all(g == 0) for g in r.grad.arrays())


def test_masked_points_do_not_matter():
    rng = np.random.default_rng(1)
    p = init_params(4, 6, seed=1)
    x = rng.normal(size=(10, 9))
    y = rng.integers(0, 4, 10)
    mask = np.array([1, 0] * 5, dtype=float)
    y2 = y.copy()
    y2[mask == 0] = (y2[mask == 0] + 1) % 4
    a, b = loss_and_grad(p, x, y, mask), loss_and_grad(p, x, y2, mask)
    assert a.loss == b.loss
    assert all(np.array_equal(u, v) for u, v in zip(a.grad.arrays(), b.grad.arrays()))


def test_label_range_checked():
    with pytest.raises(ValueError):
        loss_and_grad(init_params(3), np.zeros((1, 9)), [3])


def test_sgd_identities():
    p = init_params(3, 4, seed=2)
    g = p.map(np.ones_like)
    v = zeros_like(p)
    same, _ = sgd_step(p, zeros_like(p), 0.1, 0.9, v)
    assert all(np.array_equal(a, b) for a, b in zip(p.arrays(), same.arrays()))
    same, _ = sgd_step(p, g, 0.0, 0.9, v)
    assert all(np.array_equal(a, b) for a, b in zip(p.arrays(), same.arrays()))
    new, vel = sgd_step(p, g, 0.1, 0.5, p.map(np.ones_like))
    assert np.allclose(vel.W1, 1.5) and np.allclose(new.W1, p.W1 - 0.15)


def test_sgd_descends():
    p = init_params(3, 8, seed=0)
    x, y = np.random.default_rng(0).normal(size=(1, 9)), [2]
    r = loss_and_grad(p, x, y)
    p2, _ = sgd_step(p, r.grad, 1e-3, 0.0, zeros_like(p))
    assert loss_and_grad(p2, x, y).loss < r.loss


def test_predict_ties_lowest():
    p = zeros_like(init_params(4, 3))
    p.b3[:] = [0, 2, 2, 1]
    assert predict(p, np.zeros((2, 9))).tolist() == [1, 1]
    p.b3[:] = [0, 0, 9, 0]
    assert predict(p, np.zeros((1, 9))).tolist() == [2]


def test_backward_matches_loss_and_grad():
    p, x, y, mask = small_instance(5)
    a = loss_and_grad(p, x, y, mask)
    b = backward(p, _forward(p, x), y, mask, CE)
    assert a.loss == b.loss


def test_deterministic_loss():
    p, x, y, mask = small_instance(9)
    assert loss_and_grad(p, x, y, mask).loss == loss_and_grad(p.copy(), x, y, mask).loss


def test_checkpoint_round_trip(tmp_path):
    p = init_params(6, 16, seed=3, dtype=np.float32)
    save_params(p, tmp_path / "c.npz")
    q = load_params(tmp_path / "c.npz")
    assert all(np.array_equal(a, b) and a.dtype == b.dtype for a, b in zip(p.arrays(), q.arrays()))
    np.savez(tmp_path / "bad.npz", W1=np.zeros((3, 3)))
    with pytest.raises(ValueError):
        load_params(tmp_path / "bad.npz")


@pytest.mark.parametrize("kw", [dict(name="mae"), dict(name="gce", q_gce=0.0), dict(name="sce", alpha=0.0)])
def test_loss_kind_validation(kw):
    with pytest.raises(ValueError):
        LossKind(**kw)
