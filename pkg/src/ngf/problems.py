"""Template-driven problem instances, oracle ground truth, dataset files.

Two-dimensional families sample Dirichlet data from polynomial templates and
set the source to zero; the ground truth is the oracle solve on the grid, not
the template itself. The 3D thermal templates are formulas only.

On-disk layout of a dataset directory::

    manifest.json        family, grid, seed, per-instance coefficients/split
    train_0000.bin ...   one file per instance

Each instance file is ``b"NGF1"``, four little-endian u64 lengths, then ``f``,
``h``, ``u`` and ``mass_diag`` as little-endian float64 in row-major vertex
order.
"""
from __future__ import annotations

import itertools
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assembly import assemble_biharmonic, assemble_laplacian, assemble_lumped_mass
from .exceptions import ContractViolation
from .geometry import Domain, build_grid_domain
from .oracle import RestrictedSystem

MAGIC = b"NGF1"
MANIFEST = "manifest.json"

FAMILY_COEFFS = {
    "poisson2d": ("A", "B"),
    "biharmonic2d": ("A", "B", "C"),
    "thermal3d_source": ("A", "B", "C", "D"),
    "thermal3d_boundary": ("E", "F"),
}
ALIASES = {"poisson": "poisson2d", "biharmonic": "biharmonic2d"}

THERMAL_GRID = {
    "A": (1.25, 2.5),
    "B": (1.5, 3.5),
    "C": (1.5, 3.5),
    "D": (1.5, 3.5),
    "E": (-1.0, 1.0),
    "F": (0.0, 1.0),
}

SPLIT_RANGES = {"train": (-1.0, 1.0), "test": (1.0, 2.0)}


def canonical_family(family: str) -> str:
    family = ALIASES.get(family, family)
    if family not in FAMILY_COEFFS:
        raise ValueError(f"unknown family {family!r}; expected one of {sorted(FAMILY_COEFFS)}")
    return family


@dataclass(frozen=True)
class TemplateSpec:
    family: str
    coefficients: dict

    def __post_init__(self):
        expected = FAMILY_COEFFS[canonical_family(self.family)]
        if tuple(self.coefficients) != expected:
            raise ContractViolation(
                f"{self.family} expects coefficients {expected}, got {tuple(self.coefficients)}")

    def values(self):
        return tuple(self.coefficients[k] for k in FAMILY_COEFFS[self.family])


@dataclass(eq=False)
class ProblemInstance:
    domain_id: str
    f: np.ndarray = field(repr=False)
    h: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    mass_diag: np.ndarray = field(repr=False)
    template: TemplateSpec
    split: str


@dataclass(eq=False)
class Dataset:
    domain: Domain
    family: str
    seed: int
    instances: list

    @property
    def train(self):
        return [p for p in self.instances if p.split == "train"]

    @property
    def test(self):
        return [p for p in self.instances if p.split == "test"]

    def subset(self, split: str) -> "Dataset":
        return Dataset(self.domain, self.family, self.seed,
                       [p for p in self.instances if p.split == split])

    def __len__(self):
        return len(self.instances)


# -- templates ---------------------------------------------------------------

def eval_poisson_template(A, B, x, y):
    """``A(x^3 - 3xy^2) + B(y^3 - 3x^2 y) + x^2``."""
    return A * (x ** 3 - 3 * x * y ** 2) + B * (y ** 3 - 3 * x ** 2 * y) + x ** 2


def eval_biharmonic_template(A, B, C, x, y):
    """``A(x^4 - 6x^2y^2 + y^4) + B x^4 + C y^4``."""
    return A * (x ** 4 - 6 * x ** 2 * y ** 2 + y ** 4) + B * x ** 4 + C * y ** 4


def thermal_bracket(A, B, C, D, x, y, z):
    """The expression whose Laplacian is the 3D thermal source."""
    pi = np.pi
    return (np.sin(A * pi * x) * np.cos(A * C * pi * y)
            + (1 - np.cos(A * pi * x)) * (1 - np.sin(A * B * pi * y))
            + np.sin(A * D * pi * z) ** 2)


def _thermal_source(A, B, C, D, x, y, z):
    a = A * np.pi
    b = A * C * np.pi
    c = A * B * np.pi
    e = A * D * np.pi
    t1 = -(a * a + b * b) * np.sin(a * x) * np.cos(b * y)
    t2 = a * a * np.cos(a * x) * (1 - np.sin(c * y)) + (1 - np.cos(a * x)) * c * c * np.sin(c * y)
    # sin^2(ez) = (1 - cos 2ez) / 2
    t3 = 2 * e * e * np.cos(2 * e * z)
    return t1 + t2 + t3


def _thermal_boundary(E, F, x, y, z):
    return E * (x ** 3 - 3 * x * y ** 2) + F * (y ** 3 - 3 * x ** 2 * y) + (x ** 2 - z ** 2)


def eval_thermal_templates(coeffs: dict, x, y, z, strict: bool = True):
    """Return ``(f, h)`` of the 3D thermal templates at ``(x, y, z)``.

    ``coeffs`` holds ``A..F``. With ``strict`` each coefficient must come from
    its two-value grid.
    """
    if strict:
        for k, allowed in THERMAL_GRID.items():
            if coeffs[k] not in allowed:
                raise ContractViolation(f"coefficient {k}={coeffs[k]} not in {allowed}")
    f = _thermal_source(coeffs["A"], coeffs["B"], coeffs["C"], coeffs["D"], x, y, z)
    h = _thermal_boundary(coeffs["E"], coeffs["F"], x, y, z)
    return f, h


def thermal_source_combinations():
    """All 16 ``(A, B, C, D)`` source coefficient combinations."""
    keys = FAMILY_COEFFS["thermal3d_source"]
    return [dict(zip(keys, vals)) for vals in itertools.product(*(THERMAL_GRID[k] for k in keys))]


def thermal_boundary_combinations():
    keys = FAMILY_COEFFS["thermal3d_boundary"]
    return [dict(zip(keys, vals)) for vals in itertools.product(*(THERMAL_GRID[k] for k in keys))]


def eval_template(spec: TemplateSpec, points: np.ndarray) -> np.ndarray:
    """Evaluate a 2D template at ``points`` of shape (n, 2)."""
    x, y = points[:, 0], points[:, 1]
    if spec.family == "poisson2d":
        return eval_poisson_template(*spec.values(), x, y)
    if spec.family == "biharmonic2d":
        return eval_biharmonic_template(*spec.values(), x, y)
    raise ValueError(f"{spec.family} is not a 2D solution template")


def sample_coefficients(family: str, split: str, rng: np.random.Generator) -> TemplateSpec:
    """Draw template coefficients.

    2D families: i.i.d. ``U[-1, 1]`` for train, ``U[1, 2]`` for test. 3D
    families: uniform choice from each coefficient's grid.
    """
    family = canonical_family(family)
    names = FAMILY_COEFFS[family]
    if family.startswith("thermal3d"):
        values = [float(THERMAL_GRID[k][rng.integers(2)]) for k in names]
    else:
        if split not in SPLIT_RANGES:
            raise ValueError(f"split must be 'train' or 'test', got {split!r}")
        lo, hi = SPLIT_RANGES[split]
        values = rng.uniform(lo, hi, size=len(names)).tolist()
    return TemplateSpec(family, dict(zip(names, values)))


# -- operators and datasets ----------------------------------------------------

def problem_domain(family: str, grid: int) -> Domain:
    """Default domain for a 2D family: one boundary ring for Poisson, two for biharmonic."""
    family = canonical_family(family)
    ring = 2 if family == "biharmonic2d" else 1
    return build_grid_domain(grid, 2, ring)


def assemble_operator(family: str, domain: Domain):
    """Return ``(L, mass)`` for the family's differential operator."""
    family = canonical_family(family)
    mass = assemble_lumped_mass(domain)
    lap = assemble_laplacian(domain)
    if family == "poisson2d":
        return lap, mass
    if family == "biharmonic2d":
        return assemble_biharmonic(domain, mass=mass, laplacian=lap), mass
    raise ValueError(f"no 2D operator for {family}")


def make_instance(system: RestrictedSystem, spec: TemplateSpec, split: str) -> ProblemInstance:
    domain = system.domain
    f = np.zeros(domain.n_vertices)
    h = eval_template(spec, domain.points[domain.boundary_idx])
    u = system.solve(f, h)
    return ProblemInstance(domain.domain_id, f, h, u, system.mass.copy(), spec, split)


def generate_dataset(domain: Domain, family: str, n_train: int, n_test: int, seed: int) -> Dataset:
    """Sample ``n_train + n_test`` instances and solve each with the oracle.

    Coefficients are drawn train-first from ``np.random.default_rng(seed)``.
    """
    family = canonical_family(family)
    L, mass = assemble_operator(family, domain)
    system = RestrictedSystem(L, mass, domain)
    rng = np.random.default_rng(seed)
    instances = []
    for split, count in (("train", n_train), ("test", n_test)):
        for _ in range(count):
            instances.append(make_instance(system, sample_coefficients(family, split, rng), split))
    return Dataset(domain, family, int(seed), instances)


def dataset_residuals(dataset: Dataset) -> np.ndarray:
    """Relative interior residual of every stored instance."""
    L, mass = assemble_operator(dataset.family, dataset.domain)
    system = RestrictedSystem(L, mass, dataset.domain)
    return np.array([system.residual(p.u, p.f, p.h) for p in dataset.instances])


def manufactured_load(domain: Domain, minus_laplacian: np.ndarray, mass: np.ndarray) -> np.ndarray:
    """Source vector ``f`` with ``M f`` equal to pointwise ``-Laplacian(u*)``.

    The grid operator is the strong-form stencil while ``M f`` is an
    integrated load, so a pointwise source density is divided by the mass.
    """
    return np.asarray(minus_laplacian, dtype=float) / np.asarray(mass)


# -- serialization -------------------------------------------------------------

def write_instance(path, inst: ProblemInstance) -> None:
    arrays = [np.ascontiguousarray(a, dtype="<f8") for a in (inst.f, inst.h, inst.u, inst.mass_diag)]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<4Q", *(a.size for a in arrays)))
        for a in arrays:
            fh.write(a.tobytes())


def read_instance(path):
    """Return ``(f, h, u, mass_diag)`` from an instance file."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic {raw[:4]!r}")
    sizes = struct.unpack_from("<4Q", raw, 4)
    offset = 4 + 32
    out = []
    for n in sizes:
        out.append(np.frombuffer(raw, dtype="<f8", count=n, offset=offset).astype(float))
        offset += 8 * n
    if offset != len(raw):
        raise ValueError(f"{path}: {len(raw) - offset} trailing bytes")
    return tuple(out)


def save_dataset(dataset: Dataset, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    counters = {"train": 0, "test": 0}
    records = []
    for inst in dataset.instances:
        name = f"{inst.split}_{counters[inst.split]:04d}.bin"
        counters[inst.split] += 1
        write_instance(out / name, inst)
        records.append({"file": name, "split": inst.split, "coefficients": inst.template.coefficients})
    d = dataset.domain
    manifest = {
        "format": MAGIC.decode(),
        "family": dataset.family,
        "dim": d.dim,
        "grid": d.shape[0],
        "boundary_ring_width": d.boundary_ring_width,
        "seed": dataset.seed,
        "n_train": counters["train"],
        "n_test": counters["test"],
        "instances": records,
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return out


def load_dataset(path) -> Dataset:
    path = Path(path)
    manifest = json.loads((path / MANIFEST).read_text())
    domain = build_grid_domain(manifest["grid"], manifest["dim"], manifest["boundary_ring_width"])
    family = canonical_family(manifest["family"])
    instances = []
    for rec in manifest["instances"]:
        f, h, u, mass = read_instance(path / rec["file"])
        if f.size != domain.n_vertices or h.size != domain.n_boundary:
            raise ValueError(f"{rec['file']}: array sizes do not match the manifest grid")
        names = FAMILY_COEFFS[family]
        spec = TemplateSpec(family, {k: rec["coefficients"][k] for k in names})
        instances.append(ProblemInstance(domain.domain_id, f, h, u, mass, spec, rec["split"]))
    return Dataset(domain, family, manifest["seed"], instances)
