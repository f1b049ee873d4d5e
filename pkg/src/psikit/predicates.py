"""Predicate-domain algebra over guard registers.

Each guard register is mapped to a boolean formula over fresh condition
symbols (one per compare or otherwise-opaque definition).  Domain queries
(subset, disjointness, union) are decided by exhaustive enumeration of
symbol assignments, which is exact up to the symbol budget.  Above the
budget the environment degrades to a conservative mode where only
syntactic facts are decidable; every "unknown" answer is reported as
False and all callers treat False conservatively.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ir import CMP_OPS, Function, Instr, Pred, PhiInstr, PsiInstr

SYMBOL_BUDGET = 16


class SymbolBudgetExceeded(Exception):
    """Raised when a function needs more than SYMBOL_BUDGET fresh symbols."""


class PredExpr:
    """Base class for predicate formulas."""

    def eval(self, assignment: int) -> bool:
        raise NotImplementedError


@dataclass(frozen=True)
class Const(PredExpr):
    value: bool

    def eval(self, assignment: int) -> bool:
        return self.value

    def __str__(self) -> str:
        return "true" if self.value else "false"


@dataclass(frozen=True)
class Sym(PredExpr):
    index: int

    def eval(self, assignment: int) -> bool:
        return bool(assignment >> self.index & 1)

    def __str__(self) -> str:
        return f"s{self.index}"


@dataclass(frozen=True)
class Not(PredExpr):
    arg: PredExpr

    def eval(self, assignment: int) -> bool:
        return not self.arg.eval(assignment)

    def __str__(self) -> str:
        return f"!{self.arg}"


@dataclass(frozen=True)
class And(PredExpr):
    left: PredExpr
    right: PredExpr

    def eval(self, assignment: int) -> bool:
        return self.left.eval(assignment) and self.right.eval(assignment)

    def __str__(self) -> str:
        return f"({self.left} & {self.right})"


@dataclass(frozen=True)
class Or(PredExpr):
    left: PredExpr
    right: PredExpr

    def eval(self, assignment: int) -> bool:
        return self.left.eval(assignment) or self.right.eval(assignment)

    def __str__(self) -> str:
        return f"({self.left} | {self.right})"


TRUE_EXPR = Const(True)
FALSE_EXPR = Const(False)


class GuardEnv:
    """Formulas for every guard register of one function.

    `exact` is False when the symbol budget was exceeded and the environment
    was rebuilt in conservative mode: queries then decide only syntactic
    equality, constant-true and constant-false cases.
    """

    def __init__(self, formulas: dict[str, PredExpr], symbol_count: int,
                 exact: bool = True):
        self.formulas = formulas
        self.symbol_count = symbol_count
        self.exact = exact

    def formula(self, guard: str) -> PredExpr:
        return self.formulas[guard]

    def pred_formula(self, pred: Pred | None) -> PredExpr:
        """Formula of a simple predicate reference (None means always-true)."""
        if pred is None or pred.is_true():
            return TRUE_EXPR
        f = self.formulas[pred.reg]
        return f if pred.positive else Not(f)

    # -- decision procedures ---------------------------------------------

    def _assignments(self):
        return range(1 << self.symbol_count)

    def subset(self, a: PredExpr, b: PredExpr) -> bool:
        """True iff a implies b under every symbol assignment."""
        if not self.exact:
            return a == b or b == TRUE_EXPR or a == FALSE_EXPR
        return all(not a.eval(m) or b.eval(m) for m in self._assignments())

    def disjoint(self, a: PredExpr, b: PredExpr) -> bool:
        """True iff no assignment satisfies both a and b."""
        if not self.exact:
            if a == FALSE_EXPR or b == FALSE_EXPR:
                return True
            return a == Not(b) or b == Not(a)
        return all(not (a.eval(m) and b.eval(m)) for m in self._assignments())

    def equal(self, a: PredExpr, b: PredExpr) -> bool:
        return self.subset(a, b) and self.subset(b, a)


def domain_subset(a: PredExpr, b: PredExpr, env: GuardEnv) -> bool:
    return env.subset(a, b)


def domain_disjoint(a: PredExpr, b: PredExpr, env: GuardEnv) -> bool:
    return env.disjoint(a, b)


def domain_union(preds: list[PredExpr]) -> PredExpr:
    """Or-fold of the given formulas; the empty union is false."""
    out: PredExpr = FALSE_EXPR
    for p in preds:
        out = p if out == FALSE_EXPR else Or(out, p)
    return out


def build_guard_env(func: Function) -> GuardEnv:
    """Assign a formula to every guard register of `func`.

    Compares get fresh symbols; boolean connectives and moves map to the
    corresponding formula operations; const 0/1 map to constants; any other
    guard definition (phi, psi, load, param) gets a fresh symbol, which is
    conservative.  Raises SymbolBudgetExceeded past SYMBOL_BUDGET symbols.
    """
    from .ir import infer_kinds

    kinds = infer_kinds(func)
    formulas: dict[str, PredExpr] = {}
    counter = 0

    def fresh() -> PredExpr:
        nonlocal counter
        if counter >= SYMBOL_BUDGET:
            raise SymbolBudgetExceeded(
                f"@{func.name} needs more than {SYMBOL_BUDGET} condition symbols")
        counter += 1
        return Sym(counter - 1)

    for name, kind in func.params:
        if kind == "guard":
            formulas[name] = fresh()

    # Definitions are visited in block order; a forward reference (loop phi)
    # falls back to a fresh symbol anyway, so one pass suffices.
    for _, ins in func.instructions():
        dest = ins.dest
        if dest is None or kinds.get(dest) != "guard" or dest in formulas:
            continue
        if isinstance(ins, (PhiInstr, PsiInstr)):
            formulas[dest] = fresh()
            continue
        assert isinstance(ins, Instr)
        op = ins.opcode
        if op in CMP_OPS:
            formulas[dest] = fresh()
        elif op == "const":
            formulas[dest] = TRUE_EXPR if ins.operands[0] else FALSE_EXPR
        elif op == "mov" and isinstance(ins.operands[0], str):
            formulas[dest] = formulas.get(ins.operands[0]) or fresh()
        elif op == "not":
            inner = formulas.get(ins.operands[0])
            formulas[dest] = Not(inner) if inner is not None else fresh()
        elif op in ("and", "or"):
            left = formulas.get(ins.operands[0])
            right = formulas.get(ins.operands[1])
            if left is None or right is None:
                formulas[dest] = fresh()
            else:
                formulas[dest] = (And if op == "and" else Or)(left, right)
        else:
            formulas[dest] = fresh()
    return GuardEnv(formulas, counter, exact=True)


def conservative_guard_env(func: Function) -> GuardEnv:
    """Degraded environment: opaque per-register formulas, syntactic queries."""
    from .ir import infer_kinds

    kinds = infer_kinds(func)
    formulas: dict[str, PredExpr] = {}
    i = 0
    for name, kind in list(func.params) + [
            (ins.dest, kinds.get(ins.dest))
            for _, ins in func.instructions() if ins.dest is not None]:
        if kind == "guard" and name not in formulas:
            formulas[name] = Sym(i)
            i += 1
    return GuardEnv(formulas, symbol_count=0, exact=False)


def guard_env_or_conservative(func: Function) -> GuardEnv:
    try:
        return build_guard_env(func)
    except SymbolBudgetExceeded:
        return conservative_guard_env(func)
