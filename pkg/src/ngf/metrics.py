"""Error metrics."""
from __future__ import annotations

import numpy as np

from .exceptions import ContractViolation, ZeroReference


def relative_l2(u_true, u_pred) -> float:
    """``||u_pred - u_true||_2 / ||u_true||_2``."""
    u_true = np.asarray(u_true, dtype=float)
    u_pred = np.asarray(u_pred, dtype=float)
    if u_true.shape != u_pred.shape:
        raise ContractViolation(f"shape mismatch {u_true.shape} vs {u_pred.shape}")
    ref = np.linalg.norm(u_true)
    if ref == 0:
        raise ZeroReference("relative L2 undefined for a zero reference")
    return float(np.linalg.norm(u_pred - u_true) / ref)


def relative_l2_columns(U_true, U_pred) -> np.ndarray:
    """Per-column relative L2 for column-stacked solutions."""
    U_true = np.asarray(U_true, dtype=float)
    U_pred = np.asarray(U_pred, dtype=float)
    if U_true.shape != U_pred.shape:
        raise ContractViolation(f"shape mismatch {U_true.shape} vs {U_pred.shape}")
    ref = np.linalg.norm(U_true, axis=0)
    if np.any(ref == 0):
        raise ZeroReference("relative L2 undefined for a zero reference")
    return np.linalg.norm(U_pred - U_true, axis=0) / ref
