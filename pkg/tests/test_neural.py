import numpy as np
import pytest

from volaforge.errors import ConfigError, DimensionError, TrainingError
from volaforge.neural import (ARCHITECTURES, NetworkSpec, SeedEnsemble, TrainedNetwork,
                              forward, init_params, loss_and_grad, train,
                              train_seed_ensemble)


def loop_forward(params, x, c):
    """Scalar-loop re-implementation of the layer recurrence."""
    a = list(x)
    for l, (W, b) in enumerate(params):
        nxt = []
        for k in range(W.shape[1]):
            z = b[k]
            for j in range(W.shape[0]):
                z += W[j, k] * a[j]
            if l < len(params) - 1 and z < 0:
                z = c * z
            nxt.append(z)
        a = nxt
    return a[0]


def random_params(k, n_in, seed):
    r = np.random.default_rng(seed)
    params = init_params(NetworkSpec.nn(k), n_in, r)
    return [(W, r.normal(scale=0.3, size=b.shape)) for W, b in params]


def linear_data(n=300, seed=0, noise=0.5):
    r = np.random.default_rng(seed)
    X = r.normal(size=(n, 3))
    y = X @ [0.5, -1.0, 0.25] + 0.2 + noise * r.normal(size=n)
    return X, y


def test_zero_weights_give_output_bias():
    params = [(np.zeros((3, 4)), np.zeros(4)), (np.zeros((4, 2)), np.zeros(2)),
              (np.zeros((2, 1)), np.array([1.7]))]
    X = np.random.default_rng(0).normal(size=(5, 3))
    np.testing.assert_array_equal(forward(params, X), 1.7)


def test_leaky_negative_branch():
    params = [(np.ones((1, 1)), np.zeros(1)), (np.ones((1, 1)), np.zeros(1))]
    assert forward(params, [[-1.0]])[0] == pytest.approx(-0.01, abs=1e-15)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_forward_matches_loop_oracle(k):
    params = random_params(k, 5, k)
    X = np.random.default_rng(k + 10).normal(size=(20, 5))
    want = [loop_forward(params, x, 0.01) for x in X]
    np.testing.assert_allclose(forward(params, X), want, rtol=0, atol=1e-12)
    with pytest.raises(DimensionError):
        forward(params, X[:, :4])


def numeric_grads(params, X, y, h=1e-6):
    out = []
    for l, (W, b) in enumerate(params):
        pair = []
        for P in (W, b):
            g = np.zeros_like(P)
            for idx in np.ndindex(P.shape):
                old = P[idx]
                P[idx] = old + h
                up = loss_and_grad(params, X, y)[0]
                P[idx] = old - h
                dn = loss_and_grad(params, X, y)[0]
                P[idx] = old
                g[idx] = (up - dn) / (2 * h)
            pair.append(g)
        out.append(pair)
    return out


@pytest.mark.parametrize("k", [1, 2, 3, 4])
@pytest.mark.parametrize("seed", range(3))
def test_gradient_matches_finite_differences(k, seed):
    params = random_params(k, 4, seed)
    r = np.random.default_rng(100 + seed)
    X, y = r.normal(size=(25, 4)), r.normal(size=25)
    _, grads = loss_and_grad(params, X, y)
    for (gW, gb), (nW, nb) in zip(grads, numeric_grads(params, X, y)):
        for a, n in ((gW, nW), (gb, nb)):
            scale = max(np.linalg.norm(a), np.linalg.norm(n), 1e-8)
            assert np.linalg.norm(a - n) / scale < 1e-5


def test_dropout_expectation():
    r = np.random.default_rng(0)
    params = random_params(3, 4, 0)
    x = r.normal(size=(1, 4))
    reps = np.repeat(x, 20000, axis=0)
    _, (_, pres, _) = forward(params, reps, keep=0.8, rng=r, cache=True)
    _, (_, ref, _) = forward(params, x, cache=True)
    for z_train, z_inf in zip(pres[1:], ref[1:]):
        np.testing.assert_allclose(z_train.mean(axis=0), z_inf[0],
                                   rtol=0.01, atol=0.01 * np.abs(z_inf).max())


def test_linear_activation_reproduces_ols():
    X, y = linear_data(500, seed=1)
    Xv, yv = linear_data(200, seed=2)
    spec = NetworkSpec(hidden_layers=(2,), slope=1.0, dropout=1.0, learning_rate=0.01,
                       epochs_max=3000, patience=3000)
    net = train(spec, X, y, Xv, yv)
    A = np.column_stack([np.ones(len(y)), X])
    beta = np.linalg.lstsq(A, y, rcond=None)[0]
    ols = np.mean((A @ beta - y) ** 2)
    assert np.mean((net.predict(X) - y) ** 2) - ols < 1e-3


def test_patience_zero_stops_at_first_non_improvement():
    X, y = linear_data(100, seed=3, noise=2.0)
    Xv, yv = linear_data(50, seed=4, noise=2.0)
    net = train(NetworkSpec.nn(2, patience=0, learning_rate=0.05, epochs_max=500), X, y, Xv, yv)
    va = net.val_mse_history
    first = next(i for i in range(1, len(va)) if va[i] >= va[:i].min())
    assert net.stopped_epoch == first + 1 == len(va)
    assert len(net.train_mse_history) == net.stopped_epoch <= 500


def test_best_weights_restored_and_deterministic():
    X, y = linear_data(150, seed=5)
    Xv, yv = linear_data(60, seed=6)
    spec = NetworkSpec.nn(2, epochs_max=120, patience=20, learning_rate=0.01, seed=4)
    a = train(spec, X, y, Xv, yv)
    b = train(spec, X, y, Xv, yv)
    for (W1, b1), (W2, b2) in zip(a.params, b.params):
        assert np.array_equal(W1, W2) and np.array_equal(b1, b2)
    assert a.best_val_mse == a.val_mse_history.min()
    assert a.best_val_mse == a.val_mse_history[a.best_epoch - 1]
    std_pred = (a.predict(Xv) - a.y_mean) / a.y_scale
    assert np.mean((std_pred - (yv - a.y_mean) / a.y_scale) ** 2) == pytest.approx(
        a.best_val_mse, rel=1e-10)


def test_constant_target():
    X, _ = linear_data(80, seed=7)
    net = train(NetworkSpec.nn(1, epochs_max=10), X, np.full(80, 0.3), X[:20], np.full(20, 0.3))
    np.testing.assert_array_equal(net.predict(X), 0.3)


def test_divergence_raises_with_epoch():
    X, y = linear_data(50, seed=8)
    with pytest.raises(TrainingError) as info:
        train(NetworkSpec.nn(1, learning_rate=1e200, dropout=1.0), X * 1e100, y, X, y)
    assert info.value.epoch >= 1


def test_spec_validation():
    for bad in (NetworkSpec(hidden_layers=(4, 3)), NetworkSpec(slope=-0.1),
                NetworkSpec(dropout=0.0), NetworkSpec(patience=-1)):
        with pytest.raises(ConfigError):
            bad.validate()
    with pytest.raises(ConfigError):
        NetworkSpec.nn(5)
    assert NetworkSpec.nn(4).hidden_layers == ARCHITECTURES[4] == (16, 8, 4, 2)
    assert NetworkSpec(dropout=0.8, dropout_is_keep=False).keep == pytest.approx(0.2)


def test_json_round_trip():
    X, y = linear_data(60, seed=9)
    net = train(NetworkSpec.nn(2, epochs_max=5), X, y, X, y)
    back = TrainedNetwork.from_json(net.to_json())
    np.testing.assert_array_equal(back.predict(X), net.predict(X))


def test_identical_members_make_selection_irrelevant():
    X, y = linear_data(60, seed=10)
    net = train(NetworkSpec.nn(1, epochs_max=5), X, y, X, y)
    ens = SeedEnsemble((net,) * 10, selection=10)
    np.testing.assert_allclose(ens.predict(X), ens.with_selection(1).predict(X), rtol=1e-15)


def test_ensemble_ranking_is_order_free():
    X, y = linear_data(120, seed=11)
    Xv, yv = linear_data(40, seed=12)
    spec = NetworkSpec.nn(1, epochs_max=15, learning_rate=0.01)
    seeds = list(range(12))
    a = train_seed_ensemble(spec, X, y, Xv, yv, seeds=seeds, selection=5)
    b = train_seed_ensemble(spec, X, y, Xv, yv, seeds=seeds[::-1], selection=5)
    assert [m.spec.seed for m in a.selected] == [m.spec.seed for m in b.selected]
    mses = [m.best_val_mse for m in a.members]
    assert mses == sorted(mses)
    with pytest.raises(ConfigError):
        train_seed_ensemble(spec, X, y, Xv, yv, seeds=[1, 1])


def test_failed_members_are_counted():
    X, y = linear_data(40, seed=13)
    spec = NetworkSpec.nn(1, learning_rate=1e200, dropout=1.0)
    with pytest.raises(TrainingError):
        train_seed_ensemble(spec, X * 1e100, y, X, y, seeds=3, selection=2)


def test_averaging_beats_median_member():
    wins = 0
    for run in range(7):
        X, y = linear_data(200, seed=200 + run, noise=1.0)
        Xv, yv = linear_data(80, seed=300 + run, noise=1.0)
        ens = train_seed_ensemble(NetworkSpec.nn(2, epochs_max=40, learning_rate=0.01),
                                  X, y, Xv, yv, seeds=20, selection=10, base_seed=run)
        med = np.median([np.mean((m.predict(Xv) - yv) ** 2) for m in ens.members])
        wins += ens.validation_mse(Xv, yv) <= med
    assert wins >= 4
