"""Solver-agnostic conic-program representation over a flat decision vector.

The decision vector stacks, step by step, the state mean, the vectorised
state coefficient matrix, the control mean, and the vectorised control
coefficient matrix.  All affine maps are kept as sparse triplets; PSD blocks
are symmetric matrix-valued affine expressions stored entry-wise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ShapeError
from .system import SystemDef, basis_dim


@dataclass(frozen=True)
class DecisionIndex:
    """Offsets of each lifted variable group inside the flat decision vector."""

    N: int
    n_x: int
    n_u: int
    n_w: int
    mu_x_off: tuple[int, ...]
    V_x_off: tuple[int, ...]
    mu_u_off: tuple[int, ...]
    V_u_off: tuple[int, ...]
    total: int

    @classmethod
    def build(cls, sys: SystemDef) -> "DecisionIndex":
        mu_x_off, V_x_off, mu_u_off, V_u_off = [], [], [], []
        pos = 0
        for k in range(sys.N + 1):
            ell = basis_dim(sys, k)
            mu_x_off.append(pos)
            pos += sys.n_x
            V_x_off.append(pos)
            pos += sys.n_x * ell
            if k < sys.N:
                mu_u_off.append(pos)
                pos += sys.n_u
                V_u_off.append(pos)
                pos += sys.n_u * ell
        return cls(
            N=sys.N, n_x=sys.n_x, n_u=sys.n_u, n_w=sys.n_w,
            mu_x_off=tuple(mu_x_off), V_x_off=tuple(V_x_off),
            mu_u_off=tuple(mu_u_off), V_u_off=tuple(V_u_off),
            total=pos,
        )

    def ell(self, k: int) -> int:
        return self.n_x + k * self.n_w

    def mu_x(self, k: int) -> slice:
        return slice(self.mu_x_off[k], self.mu_x_off[k] + self.n_x)

    def V_x(self, k: int) -> slice:
        o = self.V_x_off[k]
        return slice(o, o + self.n_x * self.ell(k))

    def mu_u(self, k: int) -> slice:
        return slice(self.mu_u_off[k], self.mu_u_off[k] + self.n_u)

    def V_u(self, k: int) -> slice:
        o = self.V_u_off[k]
        return slice(o, o + self.n_u * self.ell(k))


@dataclass(frozen=True)
class EqBlock:
    """Sparse affine equalities rows @ x = b in triplet form."""

    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    b: np.ndarray

    @property
    def nrows(self) -> int:
        return self.b.shape[0]

    def matrix(self, n: int) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.vals, (self.rows, self.cols)), shape=(self.nrows, n)
        )

    @staticmethod
    def concat(blocks: list["EqBlock"]) -> "EqBlock":
        offset, rows, cols, vals, bs = 0, [], [], [], []
        for blk in blocks:
            rows.append(blk.rows + offset)
            cols.append(blk.cols)
            vals.append(blk.vals)
            bs.append(blk.b)
            offset += blk.nrows
        cat = lambda xs, dt: (
            np.concatenate(xs) if xs else np.zeros(0, dtype=dt)
        )
        return EqBlock(
            rows=cat(rows, np.int64), cols=cat(cols, np.int64),
            vals=cat(vals, float), b=cat(bs, float),
        )


@dataclass(frozen=True)
class SOCRow:
    """Second-order-cone constraint  head(x) >= || vec(x) ||_2.

    head(x) = head_const + sum head_vals[i] * x[head_cols[i]] is scalar;
    vec(x)  = v_const + (triplet matrix) @ x has dimension vec_dim, which may
    be zero, in which case the row degenerates to head(x) >= 0.
    """

    vec_dim: int
    head_cols: np.ndarray
    head_vals: np.ndarray
    head_const: float
    v_rows: np.ndarray
    v_cols: np.ndarray
    v_vals: np.ndarray
    v_const: np.ndarray
    label: str = ""

    def head_at(self, x: np.ndarray) -> float:
        return float(self.head_const + self.head_vals @ x[self.head_cols])

    def vec_at(self, x: np.ndarray) -> np.ndarray:
        v = self.v_const.copy()
        np.add.at(v, self.v_rows, self.v_vals * x[self.v_cols])
        return v

    def margin(self, x: np.ndarray) -> float:
        """head - ||vec|| at x; non-negative iff the row is satisfied."""
        return self.head_at(x) - float(np.linalg.norm(self.vec_at(x)))


@dataclass(frozen=True)
class PSDBlock:
    """Symmetric affine matrix constraint  C + sum_j x[cols_j] * E_j  >= 0.

    Entries are stored for the upper triangle only (i <= j) and implicitly
    mirrored; ``const`` is the full symmetric constant part.
    """

    side: int
    const: np.ndarray
    e_i: np.ndarray
    e_j: np.ndarray
    e_cols: np.ndarray
    e_vals: np.ndarray
    label: str = ""

    def matrix_at(self, x: np.ndarray) -> np.ndarray:
        M = self.const.copy()
        np.add.at(M, (self.e_i, self.e_j), self.e_vals * x[self.e_cols])
        off = self.e_i != self.e_j
        np.add.at(M, (self.e_j[off], self.e_i[off]), self.e_vals[off] * x[self.e_cols[off]])
        return M

    def min_eig_at(self, x: np.ndarray) -> float:
        return float(np.linalg.eigvalsh(self.matrix_at(x)).min())


@dataclass(frozen=True)
class QuadObjTerm:
    """Objective contribution || F @ x + g ||_2^2 in factored form."""

    F: sp.csr_matrix
    g: np.ndarray
    label: str = ""

    def value_at(self, x: np.ndarray) -> float:
        r = self.F @ x + self.g
        return float(r @ r)


@dataclass
class ConicProgram:
    """Quadratic objective + affine equalities + SOC rows + PSD blocks."""

    n: int
    eq: EqBlock
    socs: list[SOCRow] = field(default_factory=list)
    psds: list[PSDBlock] = field(default_factory=list)
    obj_terms: list[QuadObjTerm] = field(default_factory=list)
    obj_lin_cols: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    obj_lin_vals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    obj_const: float = 0.0
    index: "DecisionIndex | None" = None

    def __post_init__(self):
        for arr in (self.eq.cols, self.obj_lin_cols):
            if arr.size and (arr.min() < 0 or arr.max() >= self.n):
                raise ShapeError("variable index out of range")

    def objective_at(self, x: np.ndarray) -> float:
        val = self.obj_const + float(self.obj_lin_vals @ x[self.obj_lin_cols])
        for t in self.obj_terms:
            val += t.value_at(x)
        return val

    def eq_residual(self, x: np.ndarray) -> float:
        if self.eq.nrows == 0:
            return 0.0
        r = self.eq.matrix(self.n) @ x - self.eq.b
        return float(np.abs(r).max())

    def with_extra_equalities(self, extra: EqBlock) -> "ConicProgram":
        return ConicProgram(
            n=self.n,
            eq=EqBlock.concat([self.eq, extra]),
            socs=list(self.socs),
            psds=list(self.psds),
            obj_terms=list(self.obj_terms),
            obj_lin_cols=self.obj_lin_cols,
            obj_lin_vals=self.obj_lin_vals,
            obj_const=self.obj_const,
            index=self.index,
        )


def dump_text(p: ConicProgram) -> str:
    """Plain-text dump of the program (sections VARS, OBJ, EQ, SOC, PSD)."""
    from .jsonio import format_float as _f

    out = []
    out.append(f"VARS {p.n}")
    out.append(f"OBJ const {_f(p.obj_const)}")
    for c, v in zip(p.obj_lin_cols, p.obj_lin_vals):
        out.append(f"OBJ lin {c} {_f(v)}")
    for i, t in enumerate(p.obj_terms):
        coo = t.F.tocoo()
        out.append(f"OBJ term {i} rows {t.F.shape[0]} label {t.label!r}")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            out.append(f"OBJ term {i} F {r} {c} {_f(v)}")
        for r, v in enumerate(t.g):
            if v != 0.0:
                out.append(f"OBJ term {i} g {r} {_f(v)}")
    out.append(f"EQ rows {p.eq.nrows}")
    for r, c, v in zip(p.eq.rows, p.eq.cols, p.eq.vals):
        out.append(f"EQ A {r} {c} {_f(v)}")
    for r, v in enumerate(p.eq.b):
        if v != 0.0:
            out.append(f"EQ b {r} {_f(v)}")
    for i, s in enumerate(p.socs):
        out.append(f"SOC {i} dim {s.vec_dim} label {s.label!r}")
        out.append(f"SOC {i} head const {_f(s.head_const)}")
        for c, v in zip(s.head_cols, s.head_vals):
            out.append(f"SOC {i} head {c} {_f(v)}")
        for r, c, v in zip(s.v_rows, s.v_cols, s.v_vals):
            out.append(f"SOC {i} vec {r} {c} {_f(v)}")
        for r, v in enumerate(s.v_const):
            if v != 0.0:
                out.append(f"SOC {i} vconst {r} {_f(v)}")
    for i, blk in enumerate(p.psds):
        out.append(f"PSD {i} side {blk.side} label {blk.label!r}")
        for (r, c) in zip(*np.nonzero(np.triu(blk.const))):
            out.append(f"PSD {i} const {r} {c} {_f(blk.const[r, c])}")
        for r, c, col, v in zip(blk.e_i, blk.e_j, blk.e_cols, blk.e_vals):
            out.append(f"PSD {i} entry {r} {c} {col} {_f(v)}")
    return "\n".join(out) + "\n"
