"""Least-squares inversion and block orthogonal matching pursuit."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .support import ReducedSystem

WELL_POSED = "well_posed"
ILL_POSED = "ill_posed"

# candidate residuals closer than this (relative to ||b||^2) count as tied
_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class SolveConfig:
    rank_tolerance: float = 1e-10
    omp_threshold: float = 1e-20
    noisy_mode: bool = False
    subblock_width: float = 100e6
    noise_residual_factor: float = 0.5

    def __post_init__(self):
        if not 0 < self.rank_tolerance < 1:
            raise ValueError("rank_tolerance must lie in (0, 1)")
        if self.omp_threshold < 0:
            raise ValueError("omp_threshold must be >= 0")
        if not self.subblock_width > 0:
            raise ValueError("subblock_width must be positive")
        if self.noise_residual_factor < 0:
            raise ValueError("noise_residual_factor must be >= 0")

    def subblock_bins(self, delta_f: float) -> int:
        if self.subblock_width < delta_f * (1 - 1e-9):
            raise ValueError("subblock_width must be at least one bin wide")
        return max(1, int(self.subblock_width / delta_f + 0.5))


@dataclass
class SolveOutcome:
    """Result of inverting one reduced system.

    ``solution`` has one coefficient per retained column; columns outside
    the selected blocks are zero after block OMP.
    """

    solution: np.ndarray
    posedness: str
    selected_blocks: tuple = ()
    residual_norm: float = 0.0
    condition_number: float = 1.0
    iterations: int = 0
    converged: bool = True
    residual_history: list = field(default_factory=list)

    @property
    def ill_posed(self) -> bool:
        return self.posedness == ILL_POSED


def _singular_values(a: np.ndarray) -> np.ndarray:
    if a.size == 0:
        return np.zeros(0)
    return np.linalg.svd(a, compute_uv=False)


def numerical_rank(a: np.ndarray, rank_tolerance: float) -> int:
    s = _singular_values(a)
    if not len(s) or s[0] == 0:
        return 0
    return int(np.count_nonzero(s > rank_tolerance * s[0]))


def full_column_rank(a: np.ndarray, rank_tolerance: float) -> bool:
    return a.shape[1] > 0 and numerical_rank(a, rank_tolerance) == a.shape[1]


def matrix_condition(a: np.ndarray, rank_tolerance: float = 1e-10) -> float:
    """``sigma_max / sigma_min``, or ``inf`` for a rank-deficient matrix."""
    if a.shape[1] == 0:
        raise ValueError("condition number of an empty matrix")
    if a.shape[0] < a.shape[1]:
        return float("inf")
    s = _singular_values(a)
    if s[0] == 0 or s[-1] <= rank_tolerance * s[0]:
        return float("inf")
    return float(s[0] / s[-1])


def condition_diagnostics(system: ReducedSystem, rank_tolerance: float = 1e-10) -> float:
    return matrix_condition(system.matrix, rank_tolerance)


def classify_posedness(system: ReducedSystem, cfg: SolveConfig = SolveConfig()) -> str:
    if system.matrix.shape[1] == 0:
        raise ValueError("empty system")
    return WELL_POSED if full_column_rank(system.matrix, cfg.rank_tolerance) else ILL_POSED


def _lstsq(a: np.ndarray, b: np.ndarray, rank_tolerance: float) -> np.ndarray:
    return np.linalg.lstsq(a, b, rcond=rank_tolerance)[0]


def solve_direct(system: ReducedSystem, cfg: SolveConfig = SolveConfig()) -> SolveOutcome:
    """Pseudo-inverse (minimum-norm least-squares) solution on all columns."""
    a, b = system.matrix, system.rhs
    if a.shape[1] == 0:
        raise ValueError("cannot solve a system without columns")
    x = _lstsq(a, b, cfg.rank_tolerance)
    res = float(np.linalg.norm(b - a @ x))
    return SolveOutcome(
        solution=x,
        posedness=classify_posedness(system, cfg),
        residual_norm=res,
        condition_number=matrix_condition(a, cfg.rank_tolerance),
        residual_history=[float(np.linalg.norm(b)), res],
    )


def _new_directions(block: np.ndarray, basis: np.ndarray, cutoff: float) -> np.ndarray:
    """Orthonormal directions that ``block`` adds to ``span(basis)``."""
    if basis.shape[1]:
        block = block - basis @ (basis.conj().T @ block)
        # second pass keeps the basis orthogonal to working precision
        block = block - basis @ (basis.conj().T @ block)
    u, s, _ = np.linalg.svd(block, full_matrices=False)
    return u[:, s > cutoff]


def block_omp(system: ReducedSystem, blocks: Sequence, cfg: SolveConfig = SolveConfig(),
              posedness: str = ILL_POSED) -> SolveOutcome:
    """Greedy selection of whole column blocks.

    Each iteration adds the remaining block whose union with the blocks
    chosen so far leaves the smallest least-squares residual; ties go to the
    lowest block index. Noiseless runs stop once ``residual^2 <= eps``.
    Noisy runs stop before adding a block that would make the selected
    matrix rank deficient (``eps`` is then only an early exit). A noiseless
    run only counts as converged if the selected columns also have full
    rank, so that the solution is unique.

    ``blocks`` is a sequence of column-position arrays into ``system``.
    The candidate residuals come from an incrementally grown orthonormal
    basis of the selected columns; they equal the residuals of re-solving
    each candidate matrix from scratch.
    """
    a, b = system.matrix, system.rhs
    blocks = [np.asarray(c, dtype=int) for c in blocks]
    if not blocks:
        raise ValueError("block_omp needs at least one block")
    n_rows = a.shape[0]
    sigma_max = _singular_values(a)[0] if a.size else 0.0
    cutoff = cfg.rank_tolerance * sigma_max

    b_energy = float(np.vdot(b, b).real)
    tie = _TIE_RTOL * b_energy
    basis = np.zeros((n_rows, 0), dtype=complex)
    r = b.astype(complex)
    res2 = b_energy
    history = [np.sqrt(res2)]
    remaining = list(range(len(blocks)))
    selected: list = []
    failed = False

    for _ in range(len(blocks)):
        if res2 <= cfg.omp_threshold:
            break
        best = None
        for j in remaining:
            dirs = _new_directions(a[:, blocks[j]], basis, cutoff)
            r_new = r - dirs @ (dirs.conj().T @ r)
            cand = float(np.vdot(r_new, r_new).real)
            if best is None or cand < best[0] - tie:
                best = (cand, j, dirs, r_new)
        cand, j, dirs, r_new = best
        if cand >= res2:
            failed = True
            break
        if cfg.noisy_mode:
            cols = np.concatenate([blocks[k] for k in selected + [j]])
            if not full_column_rank(a[:, cols], cfg.rank_tolerance):
                break
        selected.append(j)
        remaining.remove(j)
        basis = np.hstack([basis, dirs])
        r, res2 = r_new, cand
        history.append(np.sqrt(res2))

    solution = np.zeros(a.shape[1], dtype=np.result_type(a, b, complex))
    cond = float("inf")
    if selected:
        cols = np.concatenate([blocks[k] for k in selected])
        sub = a[:, cols]
        solution[cols] = _lstsq(sub, b, cfg.rank_tolerance)
        cond = matrix_condition(sub, cfg.rank_tolerance)
    final_res = float(np.linalg.norm(b - a @ solution))
    if cfg.noisy_mode:
        converged = not failed
    else:
        # a zero residual from a rank-deficient selection is not a unique answer
        converged = final_res ** 2 <= cfg.omp_threshold and np.isfinite(cond)
    return SolveOutcome(
        solution=solution,
        posedness=posedness,
        selected_blocks=tuple(selected),
        residual_norm=final_res,
        condition_number=cond,
        iterations=len(selected),
        converged=converged,
        residual_history=[float(h) for h in history],
    )


def solve(system: ReducedSystem, blocks: Sequence, cfg: SolveConfig = SolveConfig()) -> SolveOutcome:
    """Direct solve when well posed, block OMP otherwise."""
    posedness = classify_posedness(system, cfg)
    if posedness == WELL_POSED:
        return solve_direct(system, cfg)
    return block_omp(system, blocks, cfg, posedness=ILL_POSED)
