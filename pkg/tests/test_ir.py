import textwrap

import pytest

from psikit import ir
from psikit.interp import gen_random_program
from psikit.ir import ParseError, Pred, PsiInstr, parse_module, print_module

from helpers import assert_no_errors, load_func


def parse_one(text: str) -> ir.Function:
    return parse_module(textwrap.dedent(text)).functions[0]


def test_minimal_program_single_line_style():
    mod = parse_module("func @f(%a){ b0: %x = add %a, 1\n ret %x }")
    assert len(mod.functions) == 1
    func = mod.functions[0]
    assert len(func.blocks) == 1
    assert len(list(func.blocks[0].instructions())) == 2


def test_psi_argument_order_is_preserved():
    func = parse_one("""
        func @f(%i, %p:guard) {
        b0:
          %p? %a = add %i, 1
          !%p? %b = add %i, 2
          %x = psi(%p ? %a, !%p ? %b)
          ret %x
        }
    """)
    psi = func.blocks[0].body[-1]
    assert isinstance(psi, PsiInstr)
    assert psi.args == [(Pred("p", True), "a"), (Pred("p", False), "b")]


def test_undefined_branch_target_is_an_error():
    with pytest.raises(ParseError, match="undefined block b9"):
        parse_module("func @f(){ b0: goto b9 }")


def test_syntax_error_carries_position():
    with pytest.raises(ParseError) as exc:
        parse_module("func @f() {\nb0:\n  %x = bogus 1\n  ret\n}")
    assert exc.value.line == 3


@pytest.mark.parametrize("text", [
    "func @f(){ b0: ret }",
    "func @f(%a, %p:guard){ b0: br %p, b1, b1\nb1: ret %a }",
])
def test_roundtrip_small(text):
    mod = parse_module(text)
    assert parse_module(print_module(mod)) == mod


def test_roundtrip_preserves_guard_declarations():
    func = parse_one("""
        func @f() {
        b0:
          %p:guard = const 1
          %p? %x = const 3
          ret %x
        }
    """)
    text = ir.print_function(func)
    assert ":guard = const 1" in text
    again = parse_module(text).functions[0]
    assert ir.infer_kinds(again)["p"] == "guard"


def test_print_format_of_psi_arguments():
    func = load_func("diamond_predicated.pir")
    assert "psi(%p ? %a, !%p ? %b)" in ir.print_function(func)


def test_ssa_form_lift():
    from psikit.ssa import SsaForm
    form = SsaForm.lift(load_func("diamond_predicated.pir"))
    assert form.is_ssa and form.psi_present
    non_ssa = SsaForm.lift(load_func("order_swap_nonssa.pir"))
    assert not non_ssa.is_ssa and not non_ssa.psi_present


def test_roundtrip_fixpoint_on_generated_corpus():
    for seed in range(1000):
        func = gen_random_program(seed, "tiny" if seed % 2 else "small")
        mod = ir.Module([func])
        once = print_module(mod)
        assert parse_module(once) == mod
        assert print_module(parse_module(once)) == once


def test_validate_accepts_psi_ssa_form():
    func = load_func("two_merges_predicated.pir")
    assert_no_errors(ir.Module([func]), "ssa")


def test_validate_multiple_definitions_in_ssa_mode():
    func = parse_one("""
        func @f(%a) {
        b0:
          %x = add %a, 1
          %x = add %a, 2
          ret %x
        }
    """)
    diags = ir.validate(ir.Module([func]), "ssa")
    assert any("multiple definitions of %x" in d.message for d in diags)
    assert_no_errors(ir.Module([func]), "non_ssa")


def test_validate_psi_argument_must_dominate_the_psi():
    # The argument's definition sits in a sibling block that does not
    # dominate the block holding the psi.
    func = parse_one("""
        func @f(%i, %p:guard) {
        b0:
          br %p, b1, b2
        b1:
          %a = add %i, 1
          goto b3
        b2:
          goto b3
        b3:
          %x = psi(%p ? %a)
          ret %x
        }
    """)
    diags = ir.validate(ir.Module([func]), "ssa")
    assert any("does not dominate the psi" in d.message for d in diags)


def test_validate_rejects_value_used_as_guard():
    func = parse_one("""
        func @f(%a) {
        b0:
          %v = add %a, 1
          %v? %x = add %a, 2
          ret %x
        }
    """)
    diags = ir.validate(ir.Module([func]), "non_ssa")
    assert any("is not guard-kind" in d.message for d in diags)


def test_validate_rejects_value_branch_condition():
    func = parse_one("""
        func @f(%a) {
        b0:
          br %a, b1, b1
        b1:
          ret
        }
    """)
    diags = ir.validate(ir.Module([func]), "non_ssa")
    assert any("br condition" in d.message for d in diags)


def test_validate_phi_arity_matches_predecessors():
    func = parse_one("""
        func @f(%a, %p:guard) {
        b0:
          br %p, b1, b2
        b1:
          goto b3
        b2:
          goto b3
        b3:
          %x = phi(b1: %a)
          ret %x
        }
    """)
    diags = ir.validate(ir.Module([func]), "non_ssa")
    assert any("do not match predecessors" in d.message for d in diags)


def test_validate_duplicate_function_names():
    text = "func @f(){ b0: ret }\nfunc @f(){ b0: ret }"
    diags = ir.validate(ir.parse_module(text), "non_ssa")
    assert any("duplicate function name" in d.message for d in diags)


def test_unreachable_block_warns():
    func = parse_one("""
        func @f(%a) {
        b0:
          ret %a
        b1:
          ret %a
        }
    """)
    diags = ir.validate(ir.Module([func]), "non_ssa")
    assert any(d.severity == "warning" and "unreachable" in d.message
               for d in diags)


def test_alpha_equivalence_modulo_renaming():
    a = load_func("diamond_predicated.pir")
    b = a.clone()
    # Rename every variable and block label consistently.
    text = ir.print_function(b)
    text = (text.replace("%a", "%u").replace("%b", "%w")
                .replace("%x", "%y").replace("b0", "entry"))
    renamed = parse_module(text).functions[0]
    assert ir.alpha_equivalent(a, renamed)


def test_alpha_equivalence_rejects_structural_change():
    a = load_func("diamond_predicated.pir")
    b = a.clone()
    b.blocks[0].body[0].operands[1] = 7
    assert not ir.alpha_equivalent(a, b)
    c = a.clone()
    psi = c.blocks[0].body[-1]
    psi.args.reverse()
    assert not ir.alpha_equivalent(a, c)
