"""Scikit-learn style estimators around the NGF network and the direct baseline.

``fit`` takes a :class:`~ngf.problems.Dataset` and trains on every instance in
it (pass ``dataset.subset("train")`` for the train split). ``predict`` returns
solutions stacked as rows, one per instance. Training uses batch size one,
ADAM with a one-cycle schedule, and optional gradient accumulation over
``accumulate`` instances per update.
"""
from __future__ import annotations

import logging
import math
import time

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import ContractViolation, DivergedTraining
from .geometry import Domain, build_grid_domain
from .metrics import relative_l2_columns
from .model import (DirectNetwork, NgfNetwork, PredictionBundle, direct_inputs, geometry_factors,
                    ngf_loss, predict_solution, solution_from_factors)
from .nncore import Adam, OneCycleSchedule, Tape, Tensor, accumulated_step
from .nncore import ops as T
from .nncore.checkpoint import load_checkpoint, save_checkpoint
from .validation import check_dataset, check_positive_int, stack_instances

log = logging.getLogger(__name__)


def _domain_record(domain: Domain) -> dict:
    return {"dim": domain.dim, "n_per_axis": domain.shape[0],
            "boundary_ring_width": domain.boundary_ring_width}


class _SolverRegressor(BaseEstimator):
    """Shared training loop; subclasses provide the network, loss and batched prediction."""

    def _build_network(self, dim):
        raise NotImplementedError

    def _instance_loss(self, domain, inst):
        raise NotImplementedError

    def _predict_columns(self, domain, instances) -> np.ndarray:
        raise NotImplementedError

    def fit(self, X, y=None, eval_set=None):
        """Train on all instances of ``X``; ``eval_set`` adds a test-error column to the history."""
        check_dataset(X)
        if eval_set is not None:
            check_dataset(eval_set)
        epochs = check_positive_int(self.epochs, "epochs", minimum=0)
        accumulate = check_positive_int(self.accumulate, "accumulate")
        domain = X.domain
        self.network_ = self._build_network(domain.dim)
        self.domain_ = domain
        self.history_ = {"epoch": [], "train_loss": [], "train_rel_l2": [], "lr": []}
        if eval_set is not None:
            self.history_["test_rel_l2"] = []
        self.n_train_ = len(X)
        self.n_updates_ = 0
        start = time.perf_counter()
        if epochs:
            self._train(X, eval_set, epochs, accumulate)
        self.fit_time_ = time.perf_counter() - start
        return self

    def _train(self, X, eval_set, epochs, accumulate):
        instances = X.instances
        n = len(instances)
        updates_per_epoch = math.ceil(n / accumulate)
        params = self.network_.parameters()
        optimizer = Adam(params, OneCycleSchedule(self.max_lr, epochs * updates_per_epoch,
                                                  warmup_fraction=self.warmup_fraction),
                         clip_norm=self.clip_norm)
        rng = np.random.default_rng(self.seed)
        for epoch in range(epochs):
            order = rng.permutation(n)
            total = 0.0
            pending = 0
            lr = optimizer.lr
            for k, i in enumerate(order):
                with Tape(check_finite=self.check_finite) as tape:
                    try:
                        loss = self._instance_loss(X.domain, instances[i])
                    except FloatingPointError as exc:
                        raise DivergedTraining(epoch, str(exc)) from exc
                    value = float(loss.data)
                    if not math.isfinite(value):
                        raise DivergedTraining(epoch, f"non-finite loss at instance {i}")
                    try:
                        tape.backward(loss)
                    except FloatingPointError as exc:
                        raise DivergedTraining(epoch, str(exc)) from exc
                total += value
                pending += 1
                if pending == accumulate or k == n - 1:
                    lr = accumulated_step(optimizer, pending)
                    pending = 0
            self.n_updates_ = optimizer.t
            if not all(np.all(np.isfinite(p.data)) for p in params):
                raise DivergedTraining(epoch, "parameters became non-finite")
            self.history_["epoch"].append(epoch)
            self.history_["train_loss"].append(total / n)
            self.history_["lr"].append(lr)
            if self.track_history:
                self.history_["train_rel_l2"].append(self._mean_error(X))
                if eval_set is not None:
                    self.history_["test_rel_l2"].append(self._mean_error(eval_set))
            log.info("epoch %d loss %.4g %s", epoch, total / n,
                     {k: v[-1] for k, v in self.history_.items() if v and k.endswith("rel_l2")})

    def _mean_error(self, dataset):
        return float(np.mean(self.instance_errors(dataset)))

    def predict(self, X) -> np.ndarray:
        """Predicted solutions, shape ``(n_instances, N_v)``."""
        check_is_fitted(self, "network_")
        check_dataset(X)
        return self._predict_columns(X.domain, X.instances).T

    def instance_errors(self, X) -> np.ndarray:
        """Relative L2 error of every instance in ``X``."""
        check_is_fitted(self, "network_")
        check_dataset(X)
        _, _, U = stack_instances(X.instances)
        return relative_l2_columns(U, self._predict_columns(X.domain, X.instances))

    def score(self, X, y=None) -> float:
        """Negative mean relative L2 (higher is better)."""
        return -float(np.mean(self.instance_errors(X)))

    # -- persistence ---------------------------------------------------------------

    def save(self, path) -> None:
        check_is_fitted(self, "network_")
        header = {
            "estimator": type(self).__name__,
            "params": self.get_params(),
            "architecture": self.network_.config,
            "domain": _domain_record(self.domain_),
            "n_parameters": self.network_.n_parameters(),
            "history": self.history_,
        }
        save_checkpoint(path, header, self.network_.state_dict())

    @classmethod
    def load(cls, path):
        header, arrays = load_checkpoint(path)
        kind = {c.__name__: c for c in (NeuralGreensRegressor, DirectRegressor)}.get(header.get("estimator"))
        if kind is None:
            raise ContractViolation(f"{path}: unknown estimator {header.get('estimator')!r}")
        if cls is not _SolverRegressor and not issubclass(kind, cls):
            raise ContractViolation(f"{path} holds a {kind.__name__}, not a {cls.__name__}")
        est = kind(**header["params"])
        dom = header["domain"]
        est.domain_ = build_grid_domain(dom["n_per_axis"], dom["dim"], dom["boundary_ring_width"])
        est.network_ = est._build_network(dom["dim"])
        est.network_.load_state_dict(arrays)
        est.history_ = header.get("history", {})
        est.n_train_ = None
        return est


class NeuralGreensRegressor(_SolverRegressor):
    """Learns a geometry-only factorization of the discrete Green's operator.

    Parameters
    ----------
    feature_dim : int
        Width ``d`` of the features ``Phi``; also the rank bound of ``G_theta``.
    n_blocks, n_slices : int
        Backbone depth and number of pooled slices per mixing block.
    epochs, max_lr, warmup_fraction : training schedule.
    mass_weight : float
        Weight ``lambda`` of the lumped-mass regularizer.
    accumulate : int
        Instances per optimizer update.
    head_init_scale : float or None
        Scale of the ``Phi``/``Psi`` output layers; None means ``4 / sqrt(feature_dim)``.
    mass_bias_init : float
        Initial bias of the mass head.
    clip_norm : float or None
        Global gradient-norm cap per update; per-instance losses are unnormalized
        sums, and an occasional large gradient otherwise makes ADAM jump.
    """

    def __init__(self, feature_dim=64, n_blocks=4, n_slices=16, epochs=40, max_lr=1e-4,
                 mass_weight=1.0, accumulate=1, warmup_fraction=0.3, seed=0, head_init_scale=None,
                 mass_bias_init=-7.0, clip_norm=1.0, track_history=True, check_finite=False):
        self.feature_dim = feature_dim
        self.n_blocks = n_blocks
        self.n_slices = n_slices
        self.epochs = epochs
        self.max_lr = max_lr
        self.mass_weight = mass_weight
        self.accumulate = accumulate
        self.warmup_fraction = warmup_fraction
        self.seed = seed
        self.head_init_scale = head_init_scale
        self.mass_bias_init = mass_bias_init
        self.clip_norm = clip_norm
        self.track_history = track_history
        self.check_finite = check_finite

    def _build_network(self, dim):
        return NgfNetwork(dim=dim, feature_dim=self.feature_dim, n_blocks=self.n_blocks,
                          n_slices=self.n_slices, seed=self.seed, head_init_scale=self.head_init_scale,
                          mass_bias_init=self.mass_bias_init)

    def _instance_loss(self, domain, inst):
        return ngf_loss(self.network_, domain, inst.f, inst.h, inst.u, inst.mass_diag,
                        mass_weight=self.mass_weight)

    def _predict_columns(self, domain, instances):
        F, H, _ = stack_instances(instances)
        factors = geometry_factors(self.network_, domain)
        return solution_from_factors(factors, domain, F, H).data

    def predict_bundle(self, domain: Domain, f, h) -> PredictionBundle:
        """Solution, masses and cached factors for one ``(f, h)`` pair on ``domain``."""
        check_is_fitted(self, "network_")
        return predict_solution(self.network_, domain, f, h)

    def predict_masses(self, domain: Domain) -> np.ndarray:
        check_is_fitted(self, "network_")
        return geometry_factors(self.network_, domain).mass.data[:, 0]


class DirectRegressor(_SolverRegressor):
    """Baseline: same backbone, conditioned on ``coords | f | boundary flag | h``, regressing ``u``."""

    def __init__(self, feature_dim=64, n_blocks=4, n_slices=16, epochs=40, max_lr=1e-4,
                 accumulate=1, warmup_fraction=0.3, seed=0, clip_norm=1.0, track_history=True,
                 check_finite=False):
        self.feature_dim = feature_dim
        self.n_blocks = n_blocks
        self.n_slices = n_slices
        self.epochs = epochs
        self.max_lr = max_lr
        self.accumulate = accumulate
        self.warmup_fraction = warmup_fraction
        self.seed = seed
        self.clip_norm = clip_norm
        self.track_history = track_history
        self.check_finite = check_finite

    def _build_network(self, dim):
        return DirectNetwork(dim=dim, feature_dim=self.feature_dim, n_blocks=self.n_blocks,
                             n_slices=self.n_slices, seed=self.seed)

    def _instance_loss(self, domain, inst):
        pred = self.network_(Tensor(direct_inputs(domain, inst.f, inst.h)))
        return T.mse(pred, inst.u.reshape(-1, 1))

    def _predict_columns(self, domain, instances):
        return np.column_stack([
            self.network_(Tensor(direct_inputs(domain, p.f, p.h))).data[:, 0] for p in instances])
