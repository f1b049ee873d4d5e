"""psikit: a psi-SSA middle-end with if-conversion and SSA destruction."""

from .ir import (Block, Function, Instr, Module, ParseError, PhiInstr, Pred,
                 PsiInstr, TRUE, alpha_equivalent, parse_module, print_module,
                 validate)

__version__ = "0.1.0"

__all__ = [
    "Block", "Function", "Instr", "Module", "ParseError", "PhiInstr",
    "Pred", "PsiInstr", "TRUE", "alpha_equivalent", "parse_module",
    "print_module", "validate", "__version__",
]
