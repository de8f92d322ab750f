"""End-to-end compilation of a system + cost + constraints into the conic IR."""

from __future__ import annotations

import numpy as np

from . import constraints as cons
from .cost import CostSpec, assemble_objective
from .dynamics import dynamics_equalities
from .errors import LiftPlanError, UnsupportedConstraintError
from .ir import ConicProgram, DecisionIndex, EqBlock
from .system import SystemDef


def compile_program(sys: SystemDef, cost: CostSpec,
                    constraint_list=()) -> ConicProgram:
    """Build the deterministic conic program for the lifted problem.

    With no constraints the result is an equality-constrained QP; every
    supplied constraint adds exactly one SOC row or PSD block.
    """
    idx = DecisionIndex.build(sys)
    prog = ConicProgram(
        n=idx.total,
        eq=dynamics_equalities(sys, idx),
        obj_terms=assemble_objective(sys, cost, idx),
        index=idx,
    )
    for i, c in enumerate(constraint_list):
        try:
            if isinstance(c, cons.MixedLCC):
                prog.socs.append(cons.build_lcc(sys, idx, c, label=f"lcc[{i}]"))
            elif isinstance(c, cons.TerminalCovSpec):
                prog.psds.append(cons.build_terminal_cov(sys, idx, c))
            elif isinstance(c, cons.QCCSpec):
                block = cons.build_qcc(sys, idx, c)
                from .ir import PSDBlock
                if isinstance(block, PSDBlock):
                    prog.psds.append(block)
                else:
                    prog.socs.append(block)
            else:
                raise UnsupportedConstraintError(
                    f"unknown constraint type {type(c).__name__}"
                )
        except LiftPlanError as exc:
            raise type(exc)(f"constraint {i}: {exc}") from exc
    return prog


def restrict_open_loop(p: ConicProgram, idx: DecisionIndex | None = None) -> ConicProgram:
    """Pin every control coefficient matrix to zero (deterministic policy)."""
    idx = idx if idx is not None else p.index
    if idx is None:
        raise LiftPlanError("program carries no decision index")
    cols = []
    for k in range(idx.N):
        sl = idx.V_u(k)
        cols.append(np.arange(sl.start, sl.stop, dtype=np.int64))
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    extra = EqBlock(
        rows=np.arange(cols.size, dtype=np.int64),
        cols=cols,
        vals=np.ones(cols.size),
        b=np.zeros(cols.size),
    )
    return p.with_extra_equalities(extra)
