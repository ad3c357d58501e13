from __future__ import annotations

import random

import pytest

from app.core.constructor import build_graph, heuristic_oracle
from app.core.errors import DanglingChunkIndex
from app.core.pruner import prune
from app.core.relinearize import build_sft_record, relinearize, surviving_chunk_indices
from app.core.trace import chunk_trace
from app.core.utils import token_count
from tests.factories import RawTraceFactory, make_graph, reflective_cot

FIVE_CHUNKS = "Okay, zero. Wait, one. So two. Hmm, three. Therefore four."


def _pipeline(cot: str):
    chunked = chunk_trace(RawTraceFactory(cot=cot))
    graph = build_graph(chunked, heuristic_oracle)
    pruned, report = prune(graph)
    return chunked, graph, pruned, report


def test_removed_node_drops_its_chunks():
    chunked = chunk_trace(RawTraceFactory(cot=FIVE_CHUNKS))
    assert chunked.n == 5
    g = make_graph([("A", "p", [0, 2]), ("C", "p", [4])], [("A", "C")], terminal="C")
    assert relinearize(g, chunked) == "Okay, zero. So two. Therefore four."


def test_single_node_emits_its_chunks_verbatim():
    chunked = chunk_trace(RawTraceFactory(cot=FIVE_CHUNKS))
    g = make_graph([("A", "p", [1, 3])], terminal="A")
    assert relinearize(g, chunked) == "Wait, one. Hmm, three. "


def test_order_is_chronological_not_by_node():
    chunked = chunk_trace(RawTraceFactory(cot=FIVE_CHUNKS))
    g = make_graph([("A", "p", [3]), ("B", "p", [0, 4])], [("A", "B")], terminal="B")
    assert surviving_chunk_indices(g, chunked.n) == [0, 3, 4]


@pytest.mark.parametrize("index", [5, -1])
def test_dangling_index(index):
    chunked = chunk_trace(RawTraceFactory(cot=FIVE_CHUNKS))
    g = make_graph([("A", "p", [0, index])], terminal="A")
    with pytest.raises(DanglingChunkIndex):
        relinearize(g, chunked)


def test_trailing_review_chunk_is_cut():
    cot = "Okay, x + 3 = 7. So x = 4. Wait, let me re-check. "
    chunked, _, pruned, report = _pipeline(cot)
    assert report.branch_pruned == {"C"}
    record = build_sft_record(chunked, pruned)
    assert record.pruned_cot == "Okay, x + 3 = 7. So x = 4. "
    assert len(cot) - len(record.pruned_cot) == len(chunked.chunks[2].text)
    assert (record.tokens_before, record.tokens_after) == (14, 10)
    assert record.answer == chunked.trace.answer
    assert record.question == chunked.trace.question


def test_side_review_in_the_middle_is_spliced_out():
    chunked = chunk_trace(RawTraceFactory(cot="Okay, x. Wait, sure? So y."))
    graph = make_graph(
        [("A", "p", [0]), ("B", "r", [1]), ("C", "p", [2]), ("D", "p")],
        [("A", "B"), ("A", "C"), ("C", "D")],
        terminal="D",
    )
    pruned, report = prune(graph)
    assert report.branch_pruned == {"B"}
    assert relinearize(pruned, chunked) == "Okay, x. So y."


def test_review_chained_mid_trace_survives_default_pruning():
    chunked, graph, pruned, report = _pipeline("Okay, x. Wait, sure? So y.")
    assert graph.has_edge("B", "C")
    assert report.is_empty()
    assert relinearize(pruned, chunked) == chunked.trace.cot


def test_unpruned_record_keeps_cot():
    cot = "Okay, x. So y. Therefore z."
    chunked, graph, pruned, report = _pipeline(cot)
    assert report.is_empty()
    record = build_sft_record(chunked, pruned)
    assert record.pruned_cot == cot
    assert record.tokens_before == record.tokens_after


def test_empty_cot_gives_empty_record():
    chunked, _, pruned, _ = _pipeline("")
    record = build_sft_record(chunked, pruned)
    assert record.pruned_cot == ""
    assert record.tokens_before == record.tokens_after == 0


def test_custom_counter_is_used():
    chunked, _, pruned, _ = _pipeline("Okay, x. So y.")
    record = build_sft_record(chunked, pruned, counter=len)
    assert record.tokens_before == len("Okay, x. So y.")


def test_output_is_a_chunk_subsequence():
    for seed in range(300):
        chunked, _, pruned, _ = _pipeline(reflective_cot(random.Random(seed)))
        kept = surviving_chunk_indices(pruned, chunked.n)
        assert kept == sorted(set(kept))
        text = relinearize(pruned, chunked)
        assert text == "".join(chunked.chunks[i].text for i in kept)
        assert token_count(text) <= token_count(chunked.trace.cot), seed
