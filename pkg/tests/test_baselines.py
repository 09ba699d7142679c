from __future__ import annotations

import pytest

from lexhop.baselines import (
    RetrievalShortfallError,
    parse_cot_sections,
    run_cot,
    run_one_time_retrieval,
    run_sp,
)
from lexhop.dataset import QAInstance
from lexhop.gateway import ChatGateway, MockBackend, UsageLedger
from lexhop.metrics import provision_score
from lexhop.prompts import build_cot_request, build_retrieval_request, build_sp_request

from mockcorpus import scripted_mock_for


def test_parse_cot_sections():
    parsed = parse_cot_sections("Reasoning: step one. step two.\nAnswer: the conclusion")
    assert parsed.reasoning == "step one. step two."
    assert parsed.answer == "the conclusion"
    assert not parsed.parse_warning


def test_parse_cot_sections_missing_marker_is_flagged():
    parsed = parse_cot_sections("free form text with no marker")
    assert parsed.answer == "free form text with no marker"
    assert parsed.reasoning == ""
    assert parsed.parse_warning


def test_run_sp_scripted_and_no_retrieval(env):
    mock = scripted_mock_for(env, methods=("sp",))
    ledger = UsageLedger()
    instance = env.instances[0]
    answer = run_sp(ChatGateway(mock), env.lib, instance, ledger)
    assert answer == instance.gold_answer
    report = ledger.report()
    assert set(report["stages"]) == {"answer"}


def test_sp_prompt_contains_exactly_five_examples(env):
    instance = env.instances[0]
    request = build_sp_request(env.lib, instance.background, instance.question)
    assert request.messages[1].content.count("<Example>") == 5
    assert request.messages[1].content.count("<Query>") == 1


def test_run_cot_splits_sections_and_keeps_reasoning_out_of_answer(env):
    mock = scripted_mock_for(env, methods=("cot",))
    instance = env.instances[0]
    result = run_cot(ChatGateway(mock), env.lib, instance)
    assert result.answer == instance.gold_answer
    assert "근거" in result.reasoning
    assert "근거" not in result.answer
    assert not result.parse_warning


def test_run_cot_missing_answer_marker_flags_warning(env):
    instance = env.instances[0]
    mock = MockBackend()
    request = build_cot_request(env.lib, instance.background, instance.question)
    mock.script(request, "그냥 전체 답변 텍스트")
    result = run_cot(ChatGateway(mock), env.lib, instance)
    assert result.parse_warning
    assert result.answer == "그냥 전체 답변 텍스트"


@pytest.mark.parametrize("method", ["or_sp", "or_cot"])
def test_one_time_retrieval_hits_gold_on_fixture(env, method):
    mock = scripted_mock_for(env, methods=(method,))
    mode = method.removeprefix("or_")
    for instance in env.instances:
        result = run_one_time_retrieval(
            ChatGateway(mock), env.lib, env.index, env.store, instance, mode=mode
        )
        assert len(result.retrieved_ids) <= instance.hops
        score = provision_score(result.retrieved_ids, instance.gold_set)
        assert score.f1 == 1.0 and score.em == 1
        assert result.answer == instance.gold_answer


def test_one_time_retrieval_modes_share_retrieval_but_differ_in_prompt(env):
    instance = env.instances[0]
    context = ["지문 하나"]
    sp_request = build_retrieval_request(
        env.lib, "sp", instance.background, instance.question, context
    )
    cot_request = build_retrieval_request(
        env.lib, "cot", instance.background, instance.question, context
    )
    assert sp_request.messages[0].content != cot_request.messages[0].content
    assert "Reasoning:" in cot_request.messages[1].content
    assert "Reasoning:" not in sp_request.messages[1].content


def test_one_time_retrieval_mode_validation(env):
    with pytest.raises(ValueError):
        run_one_time_retrieval(
            ChatGateway(MockBackend()), env.lib, env.index, env.store, env.instances[0], mode="x"
        )


def test_one_time_retrieval_no_match_raises_shortfall(env):
    orphan = QAInstance(
        id="orphan",
        background="zz 완전히 무관한 배경 qq",
        question="yy 무관 질문 xx",
        gold_answer="답",
        gold_provision_ids=("가상법|제1조|",),
        hops=1,
        language="ko",
    )
    with pytest.raises(RetrievalShortfallError):
        run_one_time_retrieval(
            ChatGateway(MockBackend()), env.lib, env.index, env.store, orphan, mode="sp"
        )
