import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from ngf.estimators import DirectRegressor, NeuralGreensRegressor, _SolverRegressor
from ngf.exceptions import ContractViolation, DivergedTraining
from ngf.nncore import Tensor
from ngf.problems import generate_dataset, problem_domain

SMALL = dict(feature_dim=8, n_blocks=1, n_slices=4)


@pytest.fixture(scope="module")
def data():
    return generate_dataset(problem_domain("poisson", 8), "poisson", 6, 4, 3)


@pytest.fixture(scope="module")
def one_instance():
    return generate_dataset(problem_domain("poisson", 12), "poisson", 1, 0, 0)


@pytest.mark.parametrize("cls", [NeuralGreensRegressor, DirectRegressor])
def test_zero_epochs_leaves_initial_model(cls, data):
    est = cls(epochs=0, **SMALL).fit(data.subset("train"))
    fresh = est._build_network(2)
    assert all(np.array_equal(v, fresh.state_dict()[k]) for k, v in est.network_.state_dict().items())
    assert est.history_["epoch"] == [] and est.history_["train_loss"] == []
    assert est.n_updates_ == 0


@pytest.mark.parametrize("cls", [NeuralGreensRegressor, DirectRegressor])
def test_overfits_single_instance(cls, one_instance):
    est = cls(feature_dim=16, n_blocks=1, n_slices=4, epochs=1000, max_lr=3e-3, track_history=False)
    est.fit(one_instance)
    assert -est.score(one_instance) < 0.05


@pytest.mark.parametrize("cls", [NeuralGreensRegressor, DirectRegressor])
def test_training_is_deterministic(cls, data):
    a = cls(epochs=2, seed=7, **SMALL).fit(data.subset("train"), eval_set=data.subset("test"))
    b = cls(epochs=2, seed=7, **SMALL).fit(data.subset("train"), eval_set=data.subset("test"))
    assert a.history_ == b.history_
    assert np.array_equal(a.predict(data), b.predict(data))


def test_history_columns(data):
    est = NeuralGreensRegressor(epochs=3, **SMALL).fit(data.subset("train"), eval_set=data.subset("test"))
    h = est.history_
    assert h["epoch"] == [0, 1, 2]
    assert all(len(h[k]) == 3 for k in ("train_loss", "train_rel_l2", "test_rel_l2", "lr"))
    assert np.isclose(h["train_rel_l2"][-1], -est.score(data.subset("train")), rtol=0, atol=0)


@pytest.mark.parametrize("accumulate, updates", [(1, 12), (4, 4), (8, 2)])
def test_accumulation_counts_updates(accumulate, updates, data):
    est = NeuralGreensRegressor(epochs=2, accumulate=accumulate, track_history=False, **SMALL)
    est.fit(data.subset("train"))
    assert est.n_updates_ == updates


def test_predict_shapes_and_boundary(data):
    est = NeuralGreensRegressor(epochs=1, **SMALL).fit(data.subset("train"))
    P = est.predict(data)
    assert P.shape == (len(data), data.domain.n_vertices)
    for p, inst in zip(P, data.instances):
        assert np.array_equal(p[data.domain.boundary_idx], inst.h)
    assert np.all(est.predict_masses(data.domain) > 0)


def test_predicts_on_other_resolution(data):
    est = NeuralGreensRegressor(epochs=1, **SMALL).fit(data.subset("train"))
    other = generate_dataset(problem_domain("poisson", 10), "poisson", 2, 0, 1)
    assert est.predict(other).shape == (2, 100)


def test_sklearn_params_and_clone():
    est = NeuralGreensRegressor(feature_dim=32, mass_weight=0.0)
    params = est.get_params()
    assert params["feature_dim"] == 32 and params["mass_weight"] == 0.0
    twin = clone(est)
    assert twin.get_params() == params
    est.set_params(epochs=3)
    assert est.epochs == 3


def test_unfitted_predict_raises(data):
    with pytest.raises(NotFittedError):
        NeuralGreensRegressor().predict(data)


def test_bad_inputs(data):
    with pytest.raises(ContractViolation):
        NeuralGreensRegressor().fit([1, 2, 3])
    with pytest.raises(ContractViolation):
        NeuralGreensRegressor(epochs=-1, **SMALL).fit(data)
    with pytest.raises(ContractViolation):
        NeuralGreensRegressor(accumulate=0, **SMALL).fit(data)


def test_nan_loss_raises_diverged(data, monkeypatch):
    est = NeuralGreensRegressor(epochs=3, **SMALL)
    monkeypatch.setattr(est, "_instance_loss",
                        lambda domain, inst: Tensor(np.nan, requires_grad=True))
    with pytest.raises(DivergedTraining) as info:
        est.fit(data.subset("train"))
    assert info.value.epoch == 0


@pytest.mark.parametrize("cls", [NeuralGreensRegressor, DirectRegressor])
def test_checkpoint_round_trip(cls, data, tmp_path):
    est = cls(epochs=1, **SMALL).fit(data.subset("train"))
    path = tmp_path / "model.ngfw"
    est.save(path)
    back = _SolverRegressor.load(path)
    assert type(back) is cls and back.get_params() == est.get_params()
    assert np.array_equal(back.predict(data), est.predict(data))
    back.save(tmp_path / "again.ngfw")
    assert (tmp_path / "again.ngfw").read_bytes() == path.read_bytes()


def test_load_rejects_wrong_class(data, tmp_path):
    est = DirectRegressor(epochs=0, **SMALL).fit(data.subset("train"))
    est.save(tmp_path / "d.ngfw")
    with pytest.raises(ContractViolation):
        NeuralGreensRegressor.load(tmp_path / "d.ngfw")
