"""Neural Green's function network and the direct-regression baseline.

The backbone maps per-point inputs to a latent width, then applies mixing
blocks. Each block softly assigns points to a fixed number of slices, pools a
token per slice, mixes tokens and broadcasts them back to the points, followed
by a per-point MLP; both halves are residual and pre-normalized. Pooling is a
weighted sum over points, so the backbone is permutation-equivariant.

The NGF network sees coordinates only. Features ``Phi`` build the interior
Green's matrix ``(K Phi)(K Phi)^T``, a second head ``Psi`` builds the
interior-boundary coupling ``(K Psi)(S Psi)^T``, and a softplus head predicts
per-vertex masses. Features are divided by the square root of the interior
(resp. boundary) vertex count so their entries stay O(1) independently of
resolution; the constants are part of the feature definition.

The boundary rows of ``Psi`` enter with a negative sign. A smooth ``Psi``
makes ``(K Psi)(S Psi)^T`` a positive kernel at initialization, while the
true coupling ``K L S^T`` is nonpositive; flipping the boundary rows starts
training on the right side of that sign instead of forcing it through the
zero saddle. The family of representable operators is unchanged.

``G_theta`` and ``L~_theta`` each sum ``d`` outer products, so the output
layers of both heads are initialized with scale ``4 / sqrt(d)`` (0.5 at
d = 64). The operators then start at the same size for every feature width.

The mass head starts with a bias of -7 (softplus ~ 1e-3, the size of a grid
cell mass at 32 x 32) so the mass regularizer does not dominate early steps.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Domain
from .nncore import MLP, LayerNorm, Linear, Module, Tensor
from .nncore import ops as T

SLICE_EPS = 1e-8


class MixingBlock(Module):
    def __init__(self, width, n_slices, rng):
        self.norm_mix = LayerNorm(width)
        self.slice_logits = Linear(width, n_slices, rng)
        self.value = Linear(width, width, rng)
        self.token_mix = Linear(width, width, rng)
        self.out = Linear(width, width, rng)
        self.norm_mlp = LayerNorm(width)
        self.mlp = MLP([width, 2 * width, width], rng)

    def __call__(self, x):
        z = self.norm_mix(x)
        weights = T.softmax(self.slice_logits(z), axis=1)          # N x S
        values = self.value(z)                                      # N x W
        mass = T.add(T.transpose(T.sum(weights, axis=0, keepdims=True)), SLICE_EPS)
        tokens = T.div(T.matmul(T.transpose(weights), values), mass)  # S x W
        tokens = T.gelu(self.token_mix(tokens))
        x = T.add(x, self.out(T.matmul(weights, tokens)))
        return T.add(x, self.mlp(self.norm_mlp(x)))


class Backbone(Module):
    """Lift per-point inputs to ``width`` channels, then ``n_blocks`` mixing blocks."""

    def __init__(self, in_dim, width, n_blocks, n_slices, rng):
        self.lift = MLP([in_dim, width, width], rng)
        self.blocks = [MixingBlock(width, n_slices, rng) for _ in range(n_blocks)]
        self.norm_out = LayerNorm(width)

    def __call__(self, x):
        x = self.lift(x)
        for block in self.blocks:
            x = block(x)
        return self.norm_out(x)


def default_head_scale(feature_dim: int) -> float:
    return 4.0 / float(np.sqrt(feature_dim))


class NgfNetwork(Module):
    """Geometry-only network producing ``Phi`` (N x d), ``Psi`` (N x d) and masses (N)."""

    def __init__(self, dim=2, feature_dim=64, n_blocks=4, n_slices=16, seed=0, head_init_scale=None,
                 mass_bias_init=-7.0):
        rng = np.random.default_rng(seed)
        if head_init_scale is None:
            head_init_scale = default_head_scale(feature_dim)
        self.config = dict(dim=dim, feature_dim=feature_dim, n_blocks=n_blocks, n_slices=n_slices,
                           seed=seed, head_init_scale=head_init_scale, mass_bias_init=mass_bias_init)
        self.backbone = Backbone(dim, feature_dim, n_blocks, n_slices, rng)
        self.phi_head = Linear(feature_dim, feature_dim, rng, init_scale=head_init_scale)
        self.psi_head = MLP([feature_dim, feature_dim, feature_dim], rng, last_init_scale=head_init_scale)
        self.mass_head = MLP([feature_dim, feature_dim, 1], rng)
        self.mass_head.layers[-1].bias.data[:] = mass_bias_init

    def __call__(self, points):
        latent = self.backbone(points)
        phi = self.phi_head(latent)
        psi = self.psi_head(phi)
        mass = T.softplus(self.mass_head(phi))
        return phi, psi, mass


class DirectNetwork(Module):
    """Baseline: the same backbone fed ``coords | f | boundary flag | h``, regressing ``u``."""

    def __init__(self, dim=2, feature_dim=64, n_blocks=4, n_slices=16, seed=0):
        rng = np.random.default_rng(seed)
        self.config = dict(dim=dim, feature_dim=feature_dim, n_blocks=n_blocks,
                           n_slices=n_slices, seed=seed)
        self.backbone = Backbone(dim + 3, feature_dim, n_blocks, n_slices, rng)
        self.head = MLP([feature_dim, feature_dim, 1], rng)

    def __call__(self, inputs):
        return self.head(self.backbone(inputs))


def direct_inputs(domain: Domain, f, h) -> np.ndarray:
    """Per-point input channels for the baseline: coordinates, f, boundary indicator, h (0 inside)."""
    flag = domain.is_boundary_mask().astype(float)
    h_ext = np.zeros(domain.n_vertices)
    h_ext[domain.boundary_idx] = h
    return np.column_stack([domain.points, np.asarray(f, float), flag, h_ext])


# -- factorized operator ---------------------------------------------------------

@dataclass
class GeometryFactors:
    """Function-independent quantities predicted for one domain."""

    phi_int: Tensor        # K Phi, scaled
    psi_int: Tensor        # K Psi, scaled
    psi_bnd: Tensor        # S Psi, scaled
    mass: Tensor           # N x 1, positive
    phi: Tensor = field(repr=False)
    psi: Tensor = field(repr=False)


def extract_features(network: NgfNetwork, points) -> Tensor:
    """``Phi`` for the given query points (N x d)."""
    return network(Tensor(points))[0]


def geometry_factors(network: NgfNetwork, domain: Domain) -> GeometryFactors:
    phi, psi, mass = network(Tensor(domain.points))
    a = 1.0 / np.sqrt(max(domain.n_interior, 1))
    b = 1.0 / np.sqrt(max(domain.n_boundary, 1))
    return GeometryFactors(
        phi_int=T.scale(T.gather_rows(phi, domain.interior_idx), a),
        psi_int=T.scale(T.gather_rows(psi, domain.interior_idx), b),
        psi_bnd=T.scale(T.gather_rows(psi, domain.boundary_idx), -b),
        mass=mass, phi=phi, psi=psi,
    )


def neural_green(phi_int) -> np.ndarray:
    """Materialize ``G_theta = (K Phi)(K Phi)^T`` from the interior factor (small grids only)."""
    c = phi_int.data if isinstance(phi_int, Tensor) else np.asarray(phi_int)
    return c @ c.T


def apply_green(phi_int, v):
    """``G_theta v`` in factor form: ``(K Phi)((K Phi)^T v)``."""
    return T.matmul(phi_int, T.matmul(T.transpose(phi_int), v))


def neural_boundary_op(psi_int, psi_bnd) -> np.ndarray:
    """Materialize ``L~_theta = (K Psi)(S Psi)^T``."""
    return np.asarray(getattr(psi_int, "data", psi_int)) @ np.asarray(getattr(psi_bnd, "data", psi_bnd)).T


def apply_boundary_op(psi_int, psi_bnd, h):
    """``L~_theta h`` as two thin products: ``(K Psi)((S Psi)^T h)``."""
    return T.matmul(psi_int, T.matmul(T.transpose(psi_bnd), h))


def _columns(v, n, name):
    v = np.asarray(v, dtype=float)
    if v.shape[0] != n:
        raise ValueError(f"{name}: expected {n} rows, got {v.shape[0]}")
    return v.reshape(n, -1)


def solution_from_factors(factors: GeometryFactors, domain: Domain, f, h) -> Tensor:
    """``K^T G_theta (K M_theta f - L~_theta h) + S^T h``.

    ``f`` (N_v) and ``h`` (N_b) may carry a trailing batch axis; the result is
    N_v x batch.
    """
    f = _columns(f, domain.n_vertices, "f")
    h = _columns(h, domain.n_boundary, "h")
    source = T.gather_rows(T.mul(factors.mass, f), domain.interior_idx)
    load = T.sub(source, apply_boundary_op(factors.psi_int, factors.psi_bnd, h))
    u_int = apply_green(factors.phi_int, load)
    lifted = np.zeros((domain.n_vertices, h.shape[1]))
    lifted[domain.boundary_idx] = h
    return T.add(T.scatter_rows(u_int, domain.interior_idx, domain.n_vertices), lifted)


@dataclass
class PredictionBundle:
    u_pred: np.ndarray
    mass_pred: np.ndarray
    phi_int: np.ndarray | None = field(default=None, repr=False)
    psi_int: np.ndarray | None = field(default=None, repr=False)
    psi_bnd: np.ndarray | None = field(default=None, repr=False)


def predict_solution(network: NgfNetwork, domain: Domain, f, h) -> PredictionBundle:
    factors = geometry_factors(network, domain)
    u = solution_from_factors(factors, domain, f, h).data
    if np.ndim(f) == 1:
        u = u[:, 0]
    return PredictionBundle(u, factors.mass.data[:, 0], factors.phi_int.data,
                            factors.psi_int.data, factors.psi_bnd.data)


def ngf_loss(network: NgfNetwork, domain: Domain, f, h, u, mass, mass_weight=1.0,
             factors: GeometryFactors | None = None) -> Tensor:
    """``||u - u_theta||^2 + lambda ||M_theta - diag(M)||^2`` (sums, not means)."""
    if factors is None:
        factors = geometry_factors(network, domain)
    u_theta = solution_from_factors(factors, domain, f, h)
    err = T.sub(u_theta, _columns(u, domain.n_vertices, "u"))
    loss = T.sum_squares(err)
    if mass_weight:
        mass_err = T.sub(factors.mass, _columns(mass, domain.n_vertices, "mass"))
        loss = T.add(loss, T.scale(T.sum_squares(mass_err), mass_weight))
    return loss
