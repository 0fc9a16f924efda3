"""Orthonormal two-way SANOVA design with a CAR-smoothed spatial factor.

The observation vector is ordered region-major: entry ``i*n + j`` holds
region ``i``, outcome ``j``.  Columns of the design are grouped as

    [grand mean | outcome main (n-1) | region main (N-1) | interactions]

where interaction group ``j`` is ``V_minus kron H[:, j]``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .spatial import CarStructure

__all__ = [
    "ContrastError",
    "ContrastMatrix",
    "SanovaDesign",
    "make_contrasts",
    "helmert",
    "nearest_orthogonal",
    "load_contrasts",
    "build_design",
    "induced_phi_precision",
    "theta_prior_precision",
    "mcar_phi_precision",
    "variant_equivalence",
    "HA1",
    "HA2",
    "HAM_PRINTED",
]

log = logging.getLogger(__name__)

_R3, _R6, _R2 = np.sqrt(3.0), np.sqrt(6.0), np.sqrt(2.0)

HA1 = np.array([[1, -2, 0], [1, 1, -1], [1, 1, 1]]) @ np.diag([1 / _R3, 1 / _R6, 1 / _R2])
HA2 = np.array([[1, 1, 1], [1, -2, 0], [1, 1, -1]]) @ np.diag([1 / _R3, 1 / _R6, 1 / _R2])
# printed to two decimals; orthonormalized before use
HAM_PRINTED = np.array(
    [[0.56, -0.64, -0.52], [-0.53, -0.77, 0.36], [-0.63, 0.07, -0.77]]
)


class ContrastError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ContrastMatrix:
    """Orthogonal ``n x n`` matrix; column 0 plays the role of the average.

    For the standard families column 0 is ``1/sqrt(n)``, the remaining
    columns are contrasts.  ``HAM`` deliberately has no constant column.
    """

    H_plus: np.ndarray
    name: str = "custom"

    @property
    def n(self) -> int:
        return self.H_plus.shape[0]

    @property
    def H_CA(self) -> np.ndarray:
        return self.H_plus[:, 1:]

    @property
    def is_standard(self) -> bool:
        """True when column 0 is the constant ``1/sqrt(n)`` vector."""
        return bool(np.allclose(self.H_plus[:, 0], 1 / np.sqrt(self.n), atol=1e-12))


def nearest_orthogonal(A: np.ndarray) -> np.ndarray:
    """Polar factor of ``A``: the orthogonal matrix closest in Frobenius norm."""
    u, _, vt = np.linalg.svd(np.asarray(A, dtype=float))
    return u @ vt


def helmert(n: int) -> np.ndarray:
    """Orthonormal Helmert basis with ``1/sqrt(n)`` as its first column.

    Column ``k`` (``k >= 1``) contrasts the first ``k`` levels with level ``k``.
    """
    if n < 2:
        raise ContrastError("helmert basis needs n >= 2")
    H = np.zeros((n, n))
    H[:, 0] = 1.0 / np.sqrt(n)
    for k in range(1, n):
        H[:k, k] = 1.0
        H[k, k] = -float(k)
        H[:, k] /= np.sqrt(k * (k + 1))
    return H


def make_contrasts(name: str, n: int | None = None) -> ContrastMatrix:
    """Named contrast matrix: ``HA1``, ``HA2``, ``HAM`` or ``helmert``.

    ``HAM`` is the polar factor of the two-decimal printed matrix;
    ``HAM_printed`` returns the printed entries unchanged.

    ``helmert`` may also be given as ``helmert(n)`` / ``helmert<n>``.
    """
    key = name.strip()
    upper = key.upper()
    if upper == "HA1":
        return ContrastMatrix(HA1.copy(), "HA1")
    if upper == "HA2":
        return ContrastMatrix(HA2.copy(), "HA2")
    if upper in ("HAM_PRINTED", "HAM-PRINTED"):
        return ContrastMatrix(HAM_PRINTED.copy(), "HAM_printed")
    if upper == "HAM":
        H = nearest_orthogonal(HAM_PRINTED)
        log.info(
            "HAM re-orthonormalized; max entry change %.4f",
            float(np.abs(H - HAM_PRINTED).max()),
        )
        return ContrastMatrix(H, "HAM")
    if upper.startswith("HELMERT"):
        rest = key[len("helmert"):].strip("() ")
        size = int(rest) if rest else n
        if size is None:
            raise ContrastError("helmert needs a size")
        return ContrastMatrix(helmert(size), f"helmert({size})")
    raise ContrastError(f"unknown contrast matrix {name!r}")


def load_contrasts(path: str | Path, tol: float = 1e-6) -> ContrastMatrix:
    """Read a square matrix (one row per line, whitespace separated).

    Matrices that are orthogonal only to ``tol`` are projected onto the
    nearest orthogonal matrix; anything worse is rejected.
    """
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            rows.append([float(x) for x in line.replace(",", " ").split()])
    H = np.array(rows, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1] or H.shape[0] < 1:
        raise ContrastError(f"{path}: contrast matrix must be square")
    err = np.abs(H.T @ H - np.eye(H.shape[0])).max()
    if err > 0.05:
        raise ContrastError(f"{path}: matrix is not orthogonal (error {err:.3g})")
    if err > tol:
        H = nearest_orthogonal(H)
    return ContrastMatrix(H, Path(path).stem)


@dataclass(frozen=True, eq=False)
class SanovaDesign:
    """Design matrix ``X`` (``Nn x p``) with named column blocks.

    ``blocks`` maps a block name to its column slice.  With interactions the
    design is square and orthogonal; without, it has orthonormal columns.
    """

    X: np.ndarray
    blocks: dict
    car: CarStructure
    contrasts: ContrastMatrix
    interactions: bool = True

    @property
    def N(self) -> int:
        return self.car.N

    @property
    def n(self) -> int:
        return self.contrasts.n

    @property
    def fixed(self) -> slice:
        """Unsmoothed columns: grand mean plus outcome main effects."""
        return slice(0, self.n)

    @property
    def smoothed_blocks(self) -> list[str]:
        """Names of CAR-smoothed groups, one per smoothing precision."""
        return [k for k in self.blocks if k == "CO" or k.startswith("INT")]

    @property
    def block_widths(self) -> tuple[int, ...]:
        widths = [1, self.n - 1, self.N - 1]
        if self.interactions:
            widths.append((self.N - 1) * (self.n - 1))
        return tuple(widths)


def build_design(
    car: CarStructure, contrasts: ContrastMatrix, interactions: bool = True
) -> SanovaDesign:
    """Assemble the region-by-outcome SANOVA design."""
    N, n = car.N, contrasts.n
    H = contrasts.H_plus
    ones_N = np.full((N, 1), 1.0 / np.sqrt(N))
    Vm = car.V_minus
    cols = [
        np.kron(ones_N, H[:, :1]),
        np.kron(ones_N, H[:, 1:]),
        np.kron(Vm, H[:, :1]),
    ]
    names = ["GM", "CA", "CO"]
    if interactions:
        for j in range(1, n):
            cols.append(np.kron(Vm, H[:, j:j + 1]))
            names.append(f"INT{j}")
    blocks = {}
    start = 0
    for name, c in zip(names, cols):
        blocks[name] = slice(start, start + c.shape[1])
        start += c.shape[1]
    X = np.hstack(cols)
    return SanovaDesign(X=X, blocks=blocks, car=car, contrasts=contrasts, interactions=interactions)


def theta_prior_precision(design: SanovaDesign, tau, fixed_precision: float = 0.0) -> np.ndarray:
    """Diagonal of the prior precision of the design coefficients.

    ``tau[0]`` smooths the region main effect and ``tau[j]`` interaction
    group ``j``; fixed columns get ``fixed_precision`` (0 for flat).
    """
    tau = np.asarray(tau, dtype=float)
    groups = design.smoothed_blocks
    if tau.shape[-1] != len(groups):
        raise ValueError(f"expected {len(groups)} smoothing precisions, got {tau.shape[-1]}")
    Dm = design.car.D_minus
    out = np.zeros(tau.shape[:-1] + (design.X.shape[1],))
    out[..., design.fixed] = fixed_precision
    for k, name in enumerate(groups):
        out[..., design.blocks[name]] = tau[..., k, None] * Dm
    return out


def induced_phi_precision(car: CarStructure, contrasts: ContrastMatrix, tau) -> np.ndarray:
    """Prior precision of the region-by-outcome effects implied by SANOVA.

    Equals ``Q kron (H diag(tau) H')``; the unsmoothed directions (grand
    mean and outcome means) carry zero precision.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise ValueError("smoothing precisions must be positive")
    H = contrasts.H_plus
    return np.kron(car.Q, H @ np.diag(tau) @ H.T)


def mcar_phi_precision(car: CarStructure, Omega: np.ndarray) -> np.ndarray:
    """Separable multivariate CAR precision ``Q kron Omega``."""
    return np.kron(car.Q, np.asarray(Omega, dtype=float))


def variant_equivalence(
    car: CarStructure,
    tau,
    correct: ContrastMatrix | None = None,
    variant: ContrastMatrix | None = None,
) -> dict:
    """Check that a variant-contrast SANOVA fit equals an MCAR-generated fit.

    Fitting SANOVA with ``variant`` to data from SANOVA with ``correct`` is,
    after rotating outcomes by ``B = correct @ inv(variant)``, the same as
    fitting SANOVA with ``correct`` to data whose effects have MCAR
    precision with eigenvectors ``V_Omega = B @ correct``.

    Returns the rotation, ``V_Omega`` and the two max-abs residuals.
    """
    correct = correct or make_contrasts("HA1")
    variant = variant or make_contrasts("HAM")
    tau = np.asarray(tau, dtype=float)
    B = correct.H_plus @ np.linalg.inv(variant.H_plus)
    V_Omega = B @ correct.H_plus
    T = np.kron(np.eye(car.N), B)

    fitted_variant = induced_phi_precision(car, variant, tau)
    fitted_correct = induced_phi_precision(car, correct, tau)
    generating = induced_phi_precision(car, correct, tau)
    mcar = mcar_phi_precision(car, V_Omega @ np.diag(tau) @ V_Omega.T)
    return {
        "B": B,
        "V_Omega": V_Omega,
        "fit_residual": float(np.abs(T @ fitted_variant @ T.T - fitted_correct).max()),
        "data_residual": float(np.abs(T @ generating @ T.T - mcar).max()),
    }
