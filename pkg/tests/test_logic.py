"""Epistemics: designated atoms, knowledge, hope, localization, the
multipede conditions, and the formula grammar."""

import pytest

from byzcone.errors import (HapParseError, HorizonError, IntegrityError,
                            PreconditionError)
from byzcone.haps import LocalExtEvent, LocalRecv, LocalSend
from byzcone.engine import RunUniverse, scripted_run
from byzcone.causal import Node
from byzcone.surgery import brain_in_vat, cone_adjusted_run
from byzcone.logic import (And, Correct, CorrectAt, CustomAtom, FakeAt, H,
                           Implies, InterpretedSystem, K, Not,
                           OccurredCorrectly, OccurredCorrectlyAt,
                           OccurredCorrectlyFor, OccurredFor, Or,
                           check_localized, check_multipede_bounded,
                           check_theorem2_premise, check_theorem3_necessary,
                           eval_formula, eval_hope, eval_k,
                           local_state_equal, parse_formula, render_formula,
                           seeded_runs, truth_table)

EXT_E = LocalExtEvent("e")


def fresh_system(universe) -> InterpretedSystem:
    """A private copy, so add_run never mutates a shared fixture."""
    return InterpretedSystem(RunUniverse(universe.ctx, list(universe.runs)))


@pytest.fixture()
def vat_sys(vat, vat_universe):
    """The vat scenario's universe augmented with the base and vat runs."""
    sys_ = fresh_system(vat_universe)
    base = vat.base_run()
    base_id = sys_.add_run(base)
    sys_.add_run(brain_in_vat(base, 1, 2))
    return sys_, base_id


@pytest.fixture(scope="module")
def chain_sys(corpus):
    """Chain universe closed under the Theorem-3 seeding construction."""
    chain = corpus["chain"]
    sys_ = InterpretedSystem(chain.universe())
    base = chain.base_run()
    base_id = sys_.add_run(base)
    adjusted, _, report = cone_adjusted_run(base, Node(3, 4))
    assert report.passed
    sys_.add_run(adjusted)
    for run in seeded_runs(adjusted, Node(3, 4)):
        sys_.add_run(run)
    return sys_, base_id


# ---------------------------------------------------------------------------
# Designated atoms
# ---------------------------------------------------------------------------

def test_correct_atoms(vat):
    run = scripted_run(vat.ctx, script=[(3, (0, 0, 0))])   # fail(1) round 0
    sys_ = InterpretedSystem(RunUniverse(vat.ctx, [run]))
    assert eval_formula(sys_, 0, 0, Correct(1))
    assert not eval_formula(sys_, 0, 1, Correct(1))
    assert eval_formula(sys_, 0, 3, Correct(2))
    assert eval_formula(sys_, 0, 3, CorrectAt(1, 0))
    assert not eval_formula(sys_, 0, 0, CorrectAt(1, 3))


def test_fake_vs_occurred_correctly(vat):
    faked = scripted_run(vat.ctx, script=[(4, (0, 0, 0))])  # fake(1, ext e)
    real = scripted_run(vat.ctx, script=[(0, (0, 0, 0))])   # genuine ext e
    sys_ = InterpretedSystem(RunUniverse(vat.ctx, [faked, real]))
    assert eval_formula(sys_, 0, 1, FakeAt(1, 1, EXT_E))
    assert not eval_formula(sys_, 0, 1, OccurredCorrectlyAt(1, 1, EXT_E))
    assert eval_formula(sys_, 1, 1, OccurredCorrectlyAt(1, 1, EXT_E))
    assert not eval_formula(sys_, 1, 1, FakeAt(1, 1, EXT_E))
    # the two runs agree on agent 1's local record but not on its cause
    assert local_state_equal(faked, 1, real, 1, 1)


def test_atom_coherence_invariant(vat_sys):
    """No event is ever recorded both correctly and byzantinely in the
    same round (t-coherency clause b at the logic level)."""
    sys_, _ = vat_sys
    for rid, t in sys_.points():
        if t == 0:
            continue
        assert not (eval_formula(sys_, rid, t, FakeAt(1, t, EXT_E))
                    and eval_formula(sys_, rid, t,
                                     OccurredCorrectlyAt(1, t, EXT_E)))


def test_aggregated_atoms(vat):
    run = scripted_run(vat.ctx, script=[(0, (0, 0, 0))])
    sys_ = InterpretedSystem(RunUniverse(vat.ctx, [run]))
    assert not eval_formula(sys_, 0, 0, OccurredCorrectly(EXT_E))
    for t in (1, 2, 3):
        assert eval_formula(sys_, 0, t, OccurredCorrectly(EXT_E))
        assert eval_formula(sys_, 0, t, OccurredCorrectlyFor(1, EXT_E))
        assert eval_formula(sys_, 0, t, OccurredFor(1, EXT_E))
    assert not eval_formula(sys_, 0, 3, OccurredCorrectlyFor(2, EXT_E))


def test_occurred_for_includes_fakes(vat):
    run = scripted_run(vat.ctx, script=[(4, (0, 0, 0))])
    sys_ = InterpretedSystem(RunUniverse(vat.ctx, [run]))
    assert eval_formula(sys_, 0, 1, OccurredFor(1, EXT_E))
    assert not eval_formula(sys_, 0, 1, OccurredCorrectlyFor(1, EXT_E))


def test_custom_atom_valuation(vat):
    run = vat.base_run()
    sys_ = InterpretedSystem(RunUniverse(vat.ctx, [run]),
                             valuation={"flag": {(0, 2)}})
    assert eval_formula(sys_, 0, 2, CustomAtom("flag"))
    assert not eval_formula(sys_, 0, 1, CustomAtom("flag"))
    assert not eval_formula(sys_, 0, 1, CustomAtom("other"))


def test_atom_time_bounds(vat):
    run = vat.base_run()
    sys_ = InterpretedSystem(RunUniverse(vat.ctx, [run]))
    with pytest.raises(HorizonError):
        eval_formula(sys_, 0, 9, Correct(1))
    with pytest.raises(HorizonError):
        eval_formula(sys_, 0, 0, CorrectAt(1, 9))


# ---------------------------------------------------------------------------
# Connectives and K basics
# ---------------------------------------------------------------------------

def test_connectives(vat):
    run = vat.base_run()
    sys_ = InterpretedSystem(RunUniverse(vat.ctx, [run]))
    top, bottom = Correct(1), Not(Correct(1))
    assert eval_formula(sys_, 0, 0, And((top, top)))
    assert not eval_formula(sys_, 0, 0, And((top, bottom)))
    assert eval_formula(sys_, 0, 0, Or(bottom, top))
    assert eval_formula(sys_, 0, 0, Implies(bottom, bottom))
    assert not eval_formula(sys_, 0, 0, Implies(top, bottom))


def test_k_singleton_universe(vat):
    run = scripted_run(vat.ctx, script=[(0, (0, 0, 0))])
    sys_ = InterpretedSystem(RunUniverse(vat.ctx, [run]))
    # with no confusable runs the agent knows what it saw
    assert eval_k(sys_, 0, 1, 1, OccurredCorrectly(EXT_E))


def test_k_defeated_by_fake_counterpart(vat):
    faked = scripted_run(vat.ctx, script=[(4, (0, 0, 0))])
    real = scripted_run(vat.ctx, script=[(0, (0, 0, 0))])
    sys_ = InterpretedSystem(RunUniverse(vat.ctx, [real, faked]))
    assert not eval_k(sys_, 0, 1, 1, OccurredCorrectly(EXT_E))
    # agent 2 saw nothing either way, so it knows even less
    assert not eval_k(sys_, 0, 1, 2, OccurredCorrectly(EXT_E))


def test_k_negative_monotone_under_universe_growth(vat, vat_universe):
    """Adding runs can only destroy knowledge, never create it."""
    small = fresh_system(vat_universe)
    large = fresh_system(vat_universe)
    base = vat.base_run()
    small_id = small.add_run(base)
    large_id = large.add_run(base)
    large.add_run(brain_in_vat(base, 1, 2))
    formulas = (OccurredCorrectly(EXT_E), Correct(1), Not(Correct(1)),
                OccurredFor(1, EXT_E))
    for t in range(base.length + 1):
        for i in (1, 2, 3):
            for phi in formulas:
                if eval_k(large, large_id, t, i, phi):
                    assert eval_k(small, small_id, t, i, phi)


# ---------------------------------------------------------------------------
# Hope and the axiom suite
# ---------------------------------------------------------------------------

AXIOM_FORMULAS = (OccurredCorrectly(EXT_E), Correct(1), Not(Correct(2)),
                  OccurredFor(1, EXT_E), K(1, Correct(1)))


def test_hope_and_k_axioms(vat_sys):
    sys_, _ = vat_sys
    for rid, t in sys_.points():
        for i in (1, 2, 3):
            for phi in AXIOM_FORMULAS:
                k_phi = eval_k(sys_, rid, t, i, phi)
                # truth + introspection (local indistinguishability is
                # an equivalence relation)
                if k_phi:
                    assert eval_formula(sys_, rid, t, phi)
                    assert eval_k(sys_, rid, t, i, K(i, phi))
                else:
                    assert eval_k(sys_, rid, t, i, Not(K(i, phi)))
                # hope axioms
                hope = eval_hope(sys_, rid, t, i, phi)
                correct = eval_formula(sys_, rid, t, Correct(i))
                if not correct:
                    assert hope
                elif hope:
                    assert eval_formula(sys_, rid, t,
                                        Implies(Correct(i), phi))
            assert eval_hope(sys_, rid, t, i, Correct(i))


def test_localized_lemma(vat_sys):
    sys_, _ = vat_sys
    phi = OccurredFor(1, EXT_E)
    assert check_localized(sys_, phi, 1)
    # localized formulas are known exactly when true
    for rid, t in sys_.points():
        assert eval_formula(sys_, rid, t, phi) == eval_k(sys_, rid, t, 1, phi)
    # Correct(1) is not localized once the vat counterpart is present
    assert not check_localized(sys_, Correct(1), 1)


def test_custom_atom_not_localized(vat):
    run = vat.base_run()
    sys_ = InterpretedSystem(
        RunUniverse(vat.ctx, [run, vat.base_run()]),
        valuation={"flag": {(0, 1)}})
    assert not check_localized(sys_, CustomAtom("flag"), 1)


def test_truth_table(vat):
    run = vat.base_run()
    sys_ = InterpretedSystem(RunUniverse(vat.ctx, [run]))
    table = truth_table(sys_, Correct(1))
    assert len(table) == run.length + 1
    assert all(value for _, _, value in table)


# ---------------------------------------------------------------------------
# Theorem reproductions
# ---------------------------------------------------------------------------

def test_theorem1_vat(vat_sys):
    sys_, _ = vat_sys
    for rid, t in sys_.points():
        assert not eval_k(sys_, rid, t, 1, OccurredCorrectly(EXT_E))
        assert not eval_k(sys_, rid, t, 1, Correct(1))


def test_theorem2_premise(chain):
    run = chain.base_run()
    theta = Node(3, 4)
    # o occurs only at the buffer node 1@0: outside the cone
    assert check_theorem2_premise(run, theta, LocalExtEvent("o"))
    # p occurs at the cone node 4@1
    assert not check_theorem2_premise(run, theta, LocalExtEvent("p"))
    # a hap that never occurs satisfies the premise vacuously
    assert check_theorem2_premise(run, theta, LocalExtEvent("zzz"))


def test_theorem2_hope(chain_sys):
    sys_, base_id = chain_sys
    assert not eval_hope(sys_, base_id, 4, 3,
                         OccurredCorrectly(LocalExtEvent("o")))
    # inside the cone hope survives the closed universe
    assert eval_hope(sys_, base_id, 4, 3,
                     OccurredCorrectly(LocalExtEvent("p")))


def test_multipede_bounded(chain_sys):
    sys_, base_id = chain_sys
    assert not check_multipede_bounded(sys_, base_id, Node(3, 4),
                                       LocalExtEvent("o"))
    assert check_multipede_bounded(sys_, base_id, Node(3, 4),
                                   LocalExtEvent("p"))


def test_theorem3_chain(chain):
    run = chain.base_run()
    report_o = check_theorem3_necessary(run, Node(3, 4), LocalExtEvent("o"))
    assert report_o.byzantine == frozenset({1, 2})
    assert not report_o.satisfied
    assert "violated" in report_o.render()
    report_p = check_theorem3_necessary(run, Node(3, 4), LocalExtEvent("p"))
    assert report_p.satisfied
    assert all(w is not None for _, w in report_p.entries)


def test_theorem3_investigators(investigators):
    run = investigators.base_run()
    report = check_theorem3_necessary(run, Node(5, 4), LocalRecv(1, "report"))
    assert report.byzantine == frozenset({2, 8})
    assert report.satisfied
    # only S = {} remains once both byzantine aides are accounted for
    assert len(report.entries) == 1


def test_theorem3_errors(chain):
    run = chain.base_run()
    with pytest.raises(PreconditionError):
        check_theorem3_necessary(run, Node(1, 4), LocalExtEvent("o"))
    with pytest.raises(IntegrityError):
        check_theorem3_necessary(run, Node(3, 4), LocalExtEvent("o"), f=1)


def test_seeded_runs(chain):
    run = chain.base_run()
    adjusted, _, _ = cone_adjusted_run(run, Node(3, 4))
    family = seeded_runs(adjusted, Node(3, 4))
    assert len(family) == 1   # |Byz| = f leaves only S = {}
    assert family[0].faulty_agents(4) == frozenset({1, 2})


def test_seeded_runs_expand_blame(ghost):
    run = ghost.base_run()
    adjusted, _, _ = cone_adjusted_run(run, Node(3, 4))
    family = seeded_runs(adjusted, Node(3, 4))
    # f = 1, no byzantine agents: one run per candidate scapegoat
    assert len(family) == 2
    blamed = {next(iter(r.faulty_agents(1))) for r in family}
    assert blamed == {1, 2}


# ---------------------------------------------------------------------------
# Formula grammar
# ---------------------------------------------------------------------------

ROUNDTRIP = (
    Correct(1),
    CorrectAt(2, 3),
    FakeAt(1, 2, LocalExtEvent("e")),
    OccurredCorrectlyAt(1, 1, LocalRecv(2, "m")),
    OccurredCorrectlyFor(2, LocalSend(1, "m", 0)),
    OccurredCorrectly(LocalExtEvent("e")),
    OccurredFor(3, LocalExtEvent("e")),
    CustomAtom("flag"),
    Not(Correct(1)),
    And((Correct(1), Not(Correct(2)))),
    K(1, Not(K(2, Correct(1)))),
)


@pytest.mark.parametrize("formula", ROUNDTRIP, ids=render_formula)
def test_formula_roundtrip(formula):
    assert parse_formula(render_formula(formula)) == formula


def test_parse_formula_sugar():
    assert parse_formula("(or (correct 1) (correct 2))") == \
        Or(Correct(1), Correct(2))
    assert parse_formula("(implies (correct 1) (correct 2))") == \
        Implies(Correct(1), Correct(2))
    assert parse_formula("(H 3 (correct 3))") == H(3, Correct(3))
    # bare labels abbreviate external events
    assert parse_formula("(occurred-correctly e)") == \
        OccurredCorrectly(LocalExtEvent("e"))
    assert parse_formula('(occurred-correctly "recv(1, m)")') == \
        OccurredCorrectly(LocalRecv(1, "m"))


def test_parse_formula_errors():
    for text in ("", "correct 1", "(correct)", "(correct 1",
                 "(correct 1))", "(frobnicate 1)", "(K x (correct 1))"):
        with pytest.raises(HapParseError):
            parse_formula(text)
