"""Acceptance criteria 1-11, each at its stated tolerance.

Every test records a one-line verdict (shown in the terminal summary and
printed immediately) before asserting. Criteria 6-9 train full desk-scale
models (32 x 32 grid, 100 train / 100 test instances, d=64, 4 blocks,
40 epochs); the trained models are shared between criteria through
session fixtures, so the whole module takes roughly 45 minutes on one core.
"""
import filecmp
import time

import numpy as np
import pytest

from ngf.assembly import assemble_laplacian, assemble_lumped_mass
from ngf.estimators import _SolverRegressor
from ngf.geometry import build_grid_domain
from ngf.harness import (oracle_checks, protocol_dataset, run_ablations, train_and_evaluate,
                         write_table)
from ngf.model import NgfNetwork, geometry_factors, ngf_loss, predict_solution
from ngf.nncore import Parameter
from ngf.nncore.gradcheck import check_gradients
from ngf.oracle import eigendecompose_restricted, greens_matrix, solve_constrained
from ngf.problems import (assemble_operator, eval_thermal_templates, manufactured_load,
                          problem_domain, save_dataset, thermal_bracket, thermal_source_combinations)
from op_cases import OPS

pytestmark = pytest.mark.acceptance

GRID = 32
SEED = 0


def verdict(log, n, ok, detail):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    log.append(line)
    print(line, flush=True)
    return ok


# -- shared desk-scale training runs -------------------------------------------------

class Run:
    def __init__(self, dataset, model, config=None):
        start = time.perf_counter()
        self.report, self.estimator = train_and_evaluate(dataset, model, {"seed": SEED, **(config or {})},
                                                         tolerate_divergence=True)
        self.seconds = time.perf_counter() - start


@pytest.fixture(scope="session")
def poisson_data():
    return protocol_dataset("poisson", GRID, SEED)


@pytest.fixture(scope="session")
def biharmonic_data():
    return protocol_dataset("biharmonic", GRID, SEED)


@pytest.fixture(scope="session")
def poisson_ngf(poisson_data):
    return Run(poisson_data, "ngf")


@pytest.fixture(scope="session")
def poisson_direct(poisson_data):
    return Run(poisson_data, "direct")


# -- 1-5: oracle, discretization, gradients, structure ----------------------------------

def test_c01_oracle_path_equivalence(acceptance_log):
    start = time.perf_counter()
    results = []
    for grid in (8, 12, 16, 32):
        results += [r for r in oracle_checks(grid, n_instances=20, seed=grid)
                    if "solve paths" in r.name]
    secs = time.perf_counter() - start
    worst = max(r.value for r in results)
    ok = all(r.passed for r in results) and len(results) == 8 and secs < 60
    verdict(acceptance_log, 1, ok, f"worst Green's-path vs Cholesky rel L2 {worst:.2e} over "
            f"{len(results)} family/grid pairs x 20 instances (limit 1e-10), {secs:.1f}s")
    assert ok


def test_c02_eigendecomposition_reconstruction(acceptance_log):
    start = time.perf_counter()
    worst, min_lam = 0.0, np.inf
    for family in ("poisson", "biharmonic"):
        for grid in (5, 8, 12, 16):
            d = problem_domain(family, grid)
            L, _ = assemble_operator(family, d)
            Phi, lam = eigendecompose_restricted(L, d)
            G = greens_matrix(L, d)
            worst = max(worst, np.linalg.norm((Phi / lam) @ Phi.T - G) / np.linalg.norm(G))
            min_lam = min(min_lam, lam.min())
    secs = time.perf_counter() - start
    ok = worst < 1e-8 and min_lam > 0 and secs < 60
    verdict(acceptance_log, 2, ok, f"max ||Phi L^-1 Phi^T - G||_F/||G||_F {worst:.2e} (limit 1e-8), "
            f"min eigenvalue {min_lam:.3g}, {secs:.1f}s")
    assert ok


def test_c03_discretization_order(acceptance_log):
    start = time.perf_counter()
    errors = []
    for n in (17, 33):
        d = build_grid_domain(n)
        L, m = assemble_laplacian(d), assemble_lumped_mass(d)
        x, y = d.points.T
        exact = np.sin(np.pi * x) * np.sin(2 * np.pi * y) + np.exp(x) * np.cos(y)
        minus_lap = 5 * np.pi ** 2 * np.sin(np.pi * x) * np.sin(2 * np.pi * y)
        u = solve_constrained(L, m, manufactured_load(d, minus_lap, m), exact[d.boundary_idx], d)
        errors.append(np.max(np.abs(u - exact)))
    ratio = errors[0] / errors[1]
    secs = time.perf_counter() - start
    ok = 3.0 <= ratio <= 5.0 and secs < 10
    verdict(acceptance_log, 3, ok, f"max-norm errors {errors[0]:.3e} -> {errors[1]:.3e}, "
            f"ratio {ratio:.3f} (band [3, 5]), {secs:.1f}s")
    assert ok


def test_c04_gradient_fidelity(acceptance_log):
    start = time.perf_counter()
    rng = np.random.default_rng(SEED)
    worst_op = 0.0
    for fn in OPS.values():
        a, b, c = (Parameter(rng.normal(size=s)) for s in ((5, 4), (4, 5), (1, 4)))
        worst_op = max(worst_op, check_gradients(lambda: fn(a, b, c), [a, b, c]))
    d = problem_domain("poisson", 4)
    L, m = assemble_operator("poisson", d)
    f, h = rng.normal(size=d.n_vertices), rng.normal(size=d.n_boundary)
    u = solve_constrained(L, m, f, h, d)
    net = NgfNetwork(feature_dim=4, n_blocks=1, n_slices=4, seed=SEED)
    worst_model = check_gradients(lambda: ngf_loss(net, d, f, h, u, m), net.parameters())
    secs = time.perf_counter() - start
    ok = worst_op < 1e-4 and worst_model < 1e-4 and secs < 60
    verdict(acceptance_log, 4, ok, f"worst relative FD mismatch: ops {worst_op:.2e} ({len(OPS)} cases), "
            f"tiny model loss {worst_model:.2e} over {net.n_parameters()} parameters "
            f"(limit 1e-4), {secs:.1f}s")
    assert ok


def test_c05_structural_invariants(acceptance_log):
    start = time.perf_counter()
    rng = np.random.default_rng(SEED)
    d = problem_domain("poisson", GRID)
    net = NgfNetwork(seed=SEED)
    f, h1, h2 = rng.normal(size=d.n_vertices), rng.normal(size=d.n_boundary), rng.normal(size=d.n_boundary)
    a = predict_solution(net, d, f, h1)
    passthrough = np.array_equal(a.u_pred[d.boundary_idx], h1)
    zero = np.array_equal(predict_solution(net, d, 0 * f, 0 * h1).u_pred, np.zeros(d.n_vertices))
    lhs = predict_solution(net, d, 2 * f, 3 * h1).u_pred + predict_solution(net, d, 0 * f, h2).u_pred
    rhs = predict_solution(net, d, 2 * f, 3 * h1 + h2).u_pred
    sup = np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs)
    b = predict_solution(net, d, rng.normal(size=d.n_vertices), h2)
    invariant = all(np.array_equal(getattr(a, k), getattr(b, k))
                    for k in ("mass_pred", "phi_int", "psi_int", "psi_bnd"))
    positive = bool(np.all(a.mass_pred > 0))
    secs = time.perf_counter() - start
    ok = passthrough and zero and sup <= 1e-12 and invariant and positive and secs < 10
    verdict(acceptance_log, 5, ok, f"pass-through {passthrough}, zero-in-zero-out {zero}, "
            f"superposition {sup:.1e} (limit 1e-12), factors independent of f/h {invariant}, "
            f"masses positive {positive}, {secs:.1f}s")
    assert ok


# -- 6-9: desk-scale training ---------------------------------------------------------

def _generalization(log, n, ngf, direct, family):
    r, b = ngf.report, direct.report
    minutes = (ngf.seconds + direct.seconds) / 60
    diverged = r.diverged_epoch is not None or b.diverged_epoch is not None
    if diverged:
        verdict(log, n, False, f"{family}: training diverged (ngf {r.diverged_epoch}, direct {b.diverged_epoch})")
        return False
    a_ok = r.test_mean <= 0.10
    b_ok = r.ratio <= 3.0
    c_ok = b.ratio >= 3.0 * r.ratio
    ok = a_ok and b_ok and c_ok and minutes <= 30
    verdict(log, n, ok, f"{family}: NGF train {r.train_mean:.4f} test {r.test_mean:.4f} "
            f"(a: <= 0.10 {a_ok}), ratio {r.ratio:.2f} (b: <= 3 {b_ok}); direct train "
            f"{b.train_mean:.4f} test {b.test_mean:.4f} ratio {b.ratio:.2f} "
            f"(c: >= 3x NGF ratio = {3 * r.ratio:.2f} {c_ok}); {minutes:.1f} min")
    return ok


def test_c06_poisson_generalization(acceptance_log, poisson_ngf, poisson_direct, tmp_path):
    write_table([poisson_ngf.report, poisson_direct.report], tmp_path / "table1_poisson.csv")
    assert _generalization(acceptance_log, 6, poisson_ngf, poisson_direct, "poisson")


def test_c07_biharmonic_generalization(acceptance_log, biharmonic_data):
    ngf = Run(biharmonic_data, "ngf")
    direct = Run(biharmonic_data, "direct")
    assert _generalization(acceptance_log, 7, ngf, direct, "biharmonic")


def test_c08_feature_dimension_insensitivity(acceptance_log, poisson_data, poisson_ngf):
    start = time.perf_counter()
    reports = run_ablations("feature_dim", "poisson", GRID, SEED, dataset=poisson_data,
                            known={64: poisson_ngf.report})
    minutes = (time.perf_counter() - start + poisson_ngf.seconds) / 60
    diverged = [d for d, r in reports.items() if r.diverged_epoch is not None]
    tests = {d: r.test_mean for d, r in reports.items()}
    spread = max(tests.values()) / min(tests.values()) if not diverged else float("inf")
    ok = not diverged and spread <= 2.0 and minutes <= 90
    verdict(acceptance_log, 8, ok, "test rel L2 " + ", ".join(f"d={d}: {e:.4f}" for d, e in tests.items())
            + f"; max/min {spread:.2f} (limit 2){'; diverged ' + str(diverged) if diverged else ''}"
            f"; {minutes:.1f} min")
    assert ok


def test_c09_mass_regularization_ablation(acceptance_log, poisson_data, poisson_ngf):
    start = time.perf_counter()
    reports = run_ablations("mass_reg", "poisson", GRID, SEED, dataset=poisson_data,
                            known={1.0: poisson_ngf.report})
    minutes = (time.perf_counter() - start + poisson_ngf.seconds) / 60
    off, on = reports[0.0], reports[1.0]
    if off.diverged_epoch is not None:
        ok = minutes <= 60
        detail = f"lambda=0 diverged at epoch {off.diverged_epoch} (recorded); lambda=1 test {on.test_mean:.4f}"
    else:
        ok = off.test_mean >= on.test_mean and minutes <= 60
        detail = (f"lambda=0 test {off.test_mean:.4f} (train {off.train_mean:.4f}) vs lambda=1 test "
                  f"{on.test_mean:.4f} (train {on.train_mean:.4f}); needs lambda=0 >= lambda=1")
    verdict(acceptance_log, 9, ok, f"{detail}; {minutes:.1f} min")
    assert ok


# -- 10-11: templates, determinism, formats ---------------------------------------------

def _fd_laplacian(fn, x, y, z, step=5e-4):
    """Sixth-order central differences per axis."""
    total = 0.0
    for e in np.eye(3):
        at = lambda k: fn(x + k * step * e[0], y + k * step * e[1], z + k * step * e[2])  # noqa: E731
        total = total + (2 * at(3) - 27 * at(2) + 270 * at(1) - 490 * at(0) + 270 * at(-1)
                          - 27 * at(-2) + 2 * at(-3)) / (180 * step * step)
    return total


def test_c10_thermal_template_fidelity(acceptance_log):
    start = time.perf_counter()
    g = np.linspace(0.05, 0.95, 9)
    x, y, z = (a.ravel() for a in np.meshgrid(g, g, g, indexing="ij"))
    worst = 0.0
    combos = thermal_source_combinations()
    for c in combos:
        args = [c[k] for k in "ABCD"]
        fd = _fd_laplacian(lambda a, b, cc: thermal_bracket(*args, a, b, cc), x, y, z)
        f, _ = eval_thermal_templates(dict(c, E=1.0, F=0.0), x, y, z)
        worst = max(worst, float(np.max(np.abs(f - fd))))
    base = dict(A=1.25, B=1.5, C=1.5, D=1.5)
    # E(x^3 - 3xy^2) + F(y^3 - 3x^2 y) + (x^2 - z^2), evaluated by hand
    spots = [(dict(base, E=1.0, F=0.0), (1.0, 0.0, 0.0), 2.0),
             (dict(base, E=-1.0, F=1.0), (0.5, 1.0, 0.5), -(0.125 - 1.5) + (1.0 - 0.75) + 0.0),
             (dict(base, E=1.0, F=1.0), (0.0, 0.5, 1.0), 0.125 - 1.0),
             (dict(base, E=-1.0, F=0.0), (1.0, 1.0, 1.0), 2.0)]
    spot_ok = all(eval_thermal_templates(c, *p)[1] == v for c, p, v in spots)
    secs = time.perf_counter() - start
    ok = len(combos) == 16 and worst < 1e-5 and spot_ok and secs < 10
    verdict(acceptance_log, 10, ok, f"max |analytic - FD| source over {len(combos)} combinations "
            f"{worst:.2e} (limit 1e-5); boundary spot values exact {spot_ok}; {secs:.1f}s")
    assert ok


def test_c11_determinism_and_formats(acceptance_log, poisson_ngf, tmp_path):
    start = time.perf_counter()
    a = save_dataset(protocol_dataset("poisson", GRID, SEED), tmp_path / "a")
    b = save_dataset(protocol_dataset("poisson", GRID, SEED), tmp_path / "b")
    names = sorted(p.name for p in a.iterdir())
    _, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    data_ok = not mismatch and not errors and len(names) == 201

    small = protocol_dataset("biharmonic", 12, SEED, n_train=10, n_test=10)
    cfg = dict(feature_dim=16, n_blocks=2, epochs=5, seed=SEED)
    r1, _ = train_and_evaluate(small, "ngf", cfg)
    r2, _ = train_and_evaluate(small, "ngf", cfg)
    r1.wall_clock = r2.wall_clock = 0.0
    r1.write_json(tmp_path / "r1.json")
    r2.write_json(tmp_path / "r2.json")
    report_ok = (tmp_path / "r1.json").read_bytes() == (tmp_path / "r2.json").read_bytes()

    est = poisson_ngf.estimator
    est.save(tmp_path / "m.ngfw")
    back = _SolverRegressor.load(tmp_path / "m.ngfw")
    back.save(tmp_path / "m2.ngfw")
    same_bytes = (tmp_path / "m.ngfw").read_bytes() == (tmp_path / "m2.ngfw").read_bytes()
    same_params = all(np.array_equal(v, back.network_.state_dict()[k])
                      for k, v in est.network_.state_dict().items())
    d = poisson_ngf.estimator.domain_
    same_pred = np.array_equal(geometry_factors(est.network_, d).phi_int.data,
                               geometry_factors(back.network_, d).phi_int.data)
    ckpt_ok = same_bytes and same_params and same_pred
    secs = time.perf_counter() - start
    ok = data_ok and report_ok and ckpt_ok and secs < 300
    verdict(acceptance_log, 11, ok, f"dataset byte-identical {data_ok} ({len(names)} files); "
            f"retrained report bit-identical {report_ok}; checkpoint lossless {ckpt_ok}; {secs:.1f}s")
    assert ok
