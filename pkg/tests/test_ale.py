import numpy as np
import pytest

from volaforge.ale import ale_curves, ale_estimate, variable_importance
from volaforge.linear import fit_elastic_net, fit_ols
from volaforge.neural import NetworkSpec, train
from volaforge.trees import fit_gradient_boosting, fit_random_forest


class Additive:
    def predict(self, X):
        return np.sin(X[:, 0]) + X[:, 1]


def correlated(T, rho, seed):
    r = np.random.default_rng(seed)
    z1 = r.normal(size=T)
    z2 = rho * z1 + np.sqrt(1 - rho ** 2) * r.normal(size=T)
    return np.column_stack([z1, z2])


def test_linear_model_oracle():
    r = np.random.default_rng(0)
    X = r.normal(size=(3000, 3)) * [1.0, 2.0, 0.5]
    beta = np.array([1.5, -0.7, 0.0])
    y = X @ beta + 0.1 * r.normal(size=3000)
    fit = fit_ols(X, y)
    for j, c in enumerate(ale_curves(fit, X, K=50)):
        want = fit.weights[j] * (c.edges - X[:, j].mean())
        width = np.diff(c.edges).max()
        assert np.abs(c.centered - want).max() <= abs(fit.weights[j]) * width + 1e-12


def test_ignored_feature_is_flat():
    r = np.random.default_rng(1)
    X = r.normal(size=(500, 3))
    fit = fit_ols(X[:, :2], X[:, 0] - X[:, 1])

    class Padded:
        def predict(self, Z):
            return fit.predict(Z[:, :2]) + 0.0 * Z[:, 2]

    c = ale_estimate(Padded(), X, 2)
    assert np.all(c.centered == 0.0)
    lasso = fit_elastic_net(X, 0.5, 0.0, y=X[:, 0] + 0.01 * r.normal(size=500))
    assert lasso.weights[2] == 0.0
    assert np.all(ale_estimate(lasso, X, 2).centered == 0.0)


def test_correlated_additive_oracle():
    X = correlated(100_000, 0.8, 2)
    c = ale_estimate(Additive(), X, 0, K=100)
    want = np.sin(c.edges) - np.sin(X[:, 0]).mean()
    assert np.abs(c.centered - want).max() < 0.05


def test_structural_invariants():
    X = correlated(2000, 0.5, 3)
    for c in ale_curves(Additive(), X, K=40):
        assert c.counts.sum() == X.shape[0]
        assert c.uncentered[0] == 0.0
        acc = [0.0]
        for e in c.local_effects:
            acc.append(acc[-1] + e)
        assert np.array_equal(np.array(acc), c.uncentered)
        assert abs(np.mean(c(X[:, 0 if c.feature == "x0" else 1]))) < 1e-10
        x = X[:, int(c.feature[1])]
        assert c.edges[0] == pytest.approx(x.min() - 1e-9 * np.ptp(x), abs=0, rel=1e-15)
        assert c.edges[-1] == x.max()


def test_step_evaluation_uses_right_edge():
    X = correlated(500, 0.0, 4)
    c = ale_estimate(Additive(), X, 0, K=10)
    mid = 0.5 * (c.edges[3] + c.edges[4])
    assert c(np.array([mid]))[0] == c.centered[4]
    assert c(np.array([c.edges[4]]))[0] == c.centered[4]


def test_ties_and_constants():
    r = np.random.default_rng(5)
    X = np.column_stack([r.integers(0, 5, 400).astype(float), np.full(400, 3.0)])
    c = ale_estimate(Additive(), X, 0, K=100)
    assert c.K <= 4 and c.counts.sum() == 400
    flat = ale_estimate(Additive(), X, 1)
    assert flat.constant and np.all(flat(X[:, 1]) == 0.0)


def test_importance_examples():
    r = np.random.default_rng(6)
    X = r.normal(size=(20_000, 3))
    fit = fit_ols(X[:, :2], X[:, :2] @ [2.0, 1.0])
    score = variable_importance(ale_curves(fit, X[:, :2]), X[:, :2])
    assert score.vi.sum() == pytest.approx(1.0, abs=1e-12)
    assert score.importance[0] / score.importance[1] == pytest.approx(2.0, rel=0.05)

    class Padded:
        def predict(self, Z):
            return fit.predict(Z[:, :2]) + 0.0 * Z[:, 2]

    wide = variable_importance(ale_curves(Padded(), X), X)
    assert wide.vi[2] == 0.0
    assert wide.vi[0] / wide.vi[1] == pytest.approx(score.vi[0] / score.vi[1], rel=1e-12)
    one = fit_ols(X[:, :1], 3.0 * X[:, 0])
    single = variable_importance(ale_curves(one, X[:, :1]), X[:, :1])
    assert single.vi.tolist() == [1.0]


def test_flat_curves_give_uniform_importance():
    X = np.random.default_rng(7).normal(size=(100, 4))

    class Zero:
        def predict(self, Z):
            return np.zeros(len(Z))

    assert np.allclose(variable_importance(ale_curves(Zero(), X), X).vi, 0.25)


def test_same_code_path_for_every_family():
    r = np.random.default_rng(8)
    X = r.normal(size=(300, 3))
    y = np.sin(X[:, 0]) + X[:, 1] ** 2 + 0.1 * r.normal(size=300)
    models = [
        fit_ols(X, y),
        fit_elastic_net(X, 0.01, 0.5, y=y),
        fit_random_forest(X, y, trees=20, seed=1),
        fit_gradient_boosting(X, y, trees=50, depth=2),
        train(NetworkSpec.nn(2, epochs_max=20), X[:200], y[:200], X[200:], y[200:]),
    ]
    for model in models:
        score = variable_importance(ale_curves(model, X, K=20), X)
        assert score.vi.sum() == pytest.approx(1.0, abs=1e-12) and (score.vi >= 0).all()
