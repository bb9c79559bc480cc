"""Input checks shared by the estimators and the harness."""
from __future__ import annotations

import numpy as np

from .exceptions import ContractViolation
from .problems import Dataset


def check_dataset(dataset, *, allow_empty=False) -> Dataset:
    if not isinstance(dataset, Dataset):
        raise ContractViolation(f"expected a Dataset, got {type(dataset).__name__}")
    if not allow_empty and len(dataset) == 0:
        raise ContractViolation("dataset has no instances")
    d = dataset.domain
    for i, inst in enumerate(dataset.instances):
        if inst.domain_id != d.domain_id:
            raise ContractViolation(f"instance {i} belongs to {inst.domain_id}, not {d.domain_id}")
        check_vector(inst.f, d.n_vertices, f"instance {i} f")
        check_vector(inst.h, d.n_boundary, f"instance {i} h")
        check_vector(inst.u, d.n_vertices, f"instance {i} u")
    return dataset


def check_vector(v, n, name="vector") -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise ContractViolation(f"{name}: expected shape ({n},), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ContractViolation(f"{name}: contains non-finite values")
    return v


def check_positive_int(value, name, minimum=1) -> int:
    if isinstance(value, bool) or int(value) != value or value < minimum:
        raise ContractViolation(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def stack_instances(instances):
    """Column-stacked ``(F, H, U)`` arrays for batched evaluation."""
    F = np.stack([p.f for p in instances], axis=1)
    H = np.stack([p.h for p in instances], axis=1)
    U = np.stack([p.u for p in instances], axis=1)
    return F, H, U
