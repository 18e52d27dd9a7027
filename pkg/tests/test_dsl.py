"""Query language: parsing, validation order, rendering round-trips."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cgqa.dsl import (
    DEFAULT_REGISTRY,
    StepRef,
    default_registry,
    parse_plan,
    render_plan,
    validate_plan,
)
from cgqa.errors import ErrorKind, QueryError

from genplans import MUTATORS, gen_plan, gen_plan_text


def first_error(text: str) -> QueryError:
    with pytest.raises(QueryError) as exc_info:
        validate_plan(parse_plan(text))
    return exc_info.value


class TestParse:
    def test_two_step_plan(self):
        plan = parse_plan(
            "query1 = get_information(relation='Colleges', tail_entity='Utah')\n"
            "query2 = count(set=output_of_query1)"
        )
        assert len(plan.steps) == 2
        s1, s2 = plan.steps
        assert s1.function == "get_information"
        assert [a.name for a in s1.args] == ["relation", "tail_entity"]
        assert s2.args[0].value == StepRef(1)

    def test_nested_call_names_both_functions(self):
        err = first_error("query1 = sum(set=set_negation(set=output_of_query1))")
        assert err.kind is ErrorKind.NON_ATOMIC_OPERATION
        assert err.detail["outer"] == "sum"
        assert err.detail["inner"] == "set_negation"

    def test_bracketed_list_cites_value(self):
        err = first_error(
            "query1 = sum(set=[output_of_query1, output_of_query2])"
        )
        assert err.kind is ErrorKind.NON_STANDARD_EXPRESSION
        assert err.detail["text"] == "[output_of_query1, output_of_query2]"

    def test_noncontiguous_indices_rejected(self):
        err = first_error("query2 = count(set=output_of_query1)")
        assert err.kind is ErrorKind.NON_STANDARD_EXPRESSION

    def test_garbage_line_rejected(self):
        err = first_error("how many people are there?")
        assert err.kind is ErrorKind.NON_STANDARD_EXPRESSION

    def test_comparators_parse(self):
        plan = parse_plan(
            "query1 = get_information(relation='age', tail_entity<=30)"
        )
        arg = plan.steps[0].args[1]
        assert arg.comparator == "<="
        assert arg.value == 30

    def test_string_with_comma_stays_whole(self):
        plan = parse_plan(
            "query1 = get_information(relation='city', tail_entity='Austin, TX')"
        )
        assert plan.steps[0].args[1].value == "Austin, TX"


class TestValidate:
    def test_undefined_function(self):
        err = first_error("query1 = subtract(set1='a', set2='b')")
        assert err.kind is ErrorKind.UNDEFINED_FUNCTION
        assert err.detail["function"] == "subtract"
        assert err.detail["registry"] == DEFAULT_REGISTRY.names()

    def test_illegal_parameter(self):
        err = first_error(
            "query1 = get_information(relation='age')\n"
            "query2 = max(set=output_of_query1, key='age')"
        )
        assert err.kind is ErrorKind.ILLEGAL_PARAMETER
        assert err.detail["function"] == "max"
        assert err.detail["parameter"] == "key"

    def test_inconsistent_parameters(self):
        err = first_error(
            "query1 = get_information(head_entity='a', relation='r', "
            "tail_entity='b')"
        )
        assert err.kind is ErrorKind.INCONSISTENT_PARAMETERS
        assert err.detail["parameters"] == [
            "head_entity", "relation", "tail_entity",
        ]

    def test_comparator_binding_is_not_assignment(self):
        # all three named but head carries a comparator: the combination is
        # legal and the comparator itself is the reported problem
        err = first_error(
            "query1 = get_information(tail_entity='b', relation='r', "
            "head_entity<'a')"
        )
        assert err.kind is ErrorKind.ILLEGAL_COMPARATOR
        assert err.detail["parameter"] == "head_entity"
        assert err.detail["comparator"] == "<"

    def test_forward_reference(self):
        err = first_error(
            "query1 = get_information(relation='r')\n"
            "query2 = count(set=output_of_query2)"
        )
        assert err.kind is ErrorKind.NON_STANDARD_EXPRESSION
        assert err.detail["text"] == "output_of_query2"

    def test_parse_errors_precede_validation_errors(self):
        # line 1 calls an unknown function; line 2 has a structural fault;
        # the structural fault wins because parsing completes first
        err = first_error(
            "query1 = subtract(set1='a', set2='b')\n"
            "query2 = count(set=[output_of_query1, output_of_query1])"
        )
        assert err.kind is ErrorKind.NON_STANDARD_EXPRESSION

    def test_validation_walks_steps_in_order(self):
        err = first_error(
            "query1 = subtract(set1='a', set2='b')\n"
            "query2 = max(set=output_of_query1, key='age')"
        )
        assert err.kind is ErrorKind.UNDEFINED_FUNCTION


class TestRegistry:
    def test_default_names_frozen(self):
        assert DEFAULT_REGISTRY.names() == [
            "get_information", "min", "mean", "max", "count", "sum", "keep",
            "set_intersection", "set_union", "set_negation", "set_difference",
        ]

    def test_aggregates_accept_only_set(self):
        for fn in ("min", "mean", "max", "count", "sum"):
            assert DEFAULT_REGISTRY.entries[fn].params == ("set",)

    def test_registry_is_configurable(self):
        registry = default_registry()
        registry.entries["top_k"] = DEFAULT_REGISTRY.entries["min"]
        plan = parse_plan(
            "query1 = get_information(relation='r')\n"
            "query2 = top_k(set=output_of_query1)"
        )
        assert validate_plan(plan, registry) is plan
        with pytest.raises(QueryError):
            validate_plan(plan, DEFAULT_REGISTRY)


class TestRendering:
    def test_canonical_form(self):
        text = "query1  =  get_information( relation='r',tail_entity<5 )"
        plan = parse_plan(text)
        assert render_plan(plan) == (
            "query1 = get_information(relation='r', tail_entity<5)"
        )

    @settings(max_examples=200, deadline=None)
    @given(st.integers(min_value=0, max_value=10**9))
    def test_round_trip(self, seed):
        plan = gen_plan(random.Random(seed))
        text = render_plan(plan)
        assert parse_plan(text).steps == list(plan.steps)
        assert render_plan(parse_plan(text)) == text

    def test_determinism(self):
        text = gen_plan_text(random.Random(42))
        assert parse_plan(text).steps == parse_plan(text).steps
        bad = "query1 = count(set=[a, b])"
        e1, e2 = first_error(bad), first_error(bad)
        assert (e1.kind, e1.detail) == (e2.kind, e2.detail)


class TestGeneratedPlans:
    def test_generated_plans_validate(self):
        rng = random.Random(1234)
        for _ in range(200):
            plan = parse_plan(gen_plan_text(rng))
            validate_plan(plan)

    @pytest.mark.parametrize("mutator,kind", MUTATORS,
                             ids=[k.value for _, k in MUTATORS])
    def test_mutators_hit_exact_kind(self, mutator, kind):
        rng = random.Random(99)
        for _ in range(50):
            plan = gen_plan(rng)
            mutated = mutator(plan, rng)
            err = first_error(mutated)
            assert err.kind is kind, f"{mutated!r} -> {err.kind}"
