import io
import logging

import pytest
from hypothesis import given
from hypothesis import strategies as st

from moodbot.corpus import (
    Conversation,
    conversations_to_pairs,
    corpus_stats,
    filter_conversations,
    parse_conv_file,
    write_conv_file,
)
from moodbot.errors import InvalidInputError, ParseError


class TestParse:
    def test_two_records(self):
        convs = list(parse_conv_file(["E\n", "M a\n", "M b\n", "E\n", "M c\n"]))
        assert [c.utterances for c in convs] == [["a", "b"], ["c"]]

    def test_empty_record_skipped_with_warning(self, caplog):
        with caplog.at_level(logging.WARNING):
            convs = list(parse_conv_file(["E\n", "E\n", "M x\n"]))
        assert [c.utterances for c in convs] == [["x"]]
        assert any("empty conversation" in r.message for r in caplog.records)

    def test_content_before_first_delimiter(self):
        with pytest.raises(ParseError) as exc:
            list(parse_conv_file(["M a\n", "E\n"]))
        assert exc.value.line == 1

    def test_lines_without_m_prefix(self):
        convs = list(parse_conv_file(["E\n", "raw utterance\n"]))
        assert convs[0].utterances == ["raw utterance"]

    def test_blank_lines_ignored(self):
        convs = list(parse_conv_file(["E\n", "M a\n", "\n", "M b\n"]))
        assert convs[0].utterances == ["a", "b"]

    def test_round_trip_identity(self):
        text = "E\nM 你好\nM 最近怎么样\nE\nM 想聊聊\n"
        convs = list(parse_conv_file(io.StringIO(text)))
        out = io.StringIO()
        write_conv_file(convs, out)
        assert out.getvalue() == text
        again = list(parse_conv_file(io.StringIO(out.getvalue())))
        assert [c.utterances for c in again] == [c.utterances for c in convs]

    def test_conversation_requires_utterances(self):
        with pytest.raises(InvalidInputError):
            Conversation([])


def sentinel_score_fn(texts):
    # deterministic stub: utterances containing the sentinel score 0.9
    return [0.9 if "愁" in t else 0.1 for t in texts]


class TestFilter:
    def test_any_utterance_retains_whole(self):
        convs = [Conversation(["开心的一天", "我很忧愁"])]
        retained, report = filter_conversations(convs, sentinel_score_fn, 0.7)
        assert len(retained) == 1
        assert retained[0].utterances == ["开心的一天", "我很忧愁"]
        assert report.retained == 1 and report.dropped == 0

    def test_all_below_threshold_dropped(self):
        convs = [Conversation(["开心", "快乐"])]
        retained, report = filter_conversations(convs, sentinel_score_fn, 0.7)
        assert retained == []
        assert report.dropped == 1

    def test_matches_brute_force_scan(self):
        import numpy as np

        rng = np.random.default_rng(0)
        convs = []
        for _ in range(200):
            utts = []
            for _ in range(rng.integers(1, 5)):
                utts.append("忧愁难过" if rng.random() < 0.3 else "日常闲聊")
            convs.append(Conversation(utts))
        retained, report = filter_conversations(convs, sentinel_score_fn, 0.7)
        want = [
            c for c in convs
            if any(s >= 0.7 for s in sentinel_score_fn(c.utterances))
        ]
        assert [c.utterances for c in retained] == [c.utterances for c in want]
        assert report.retained + report.dropped == report.total_conversations == 200

    def test_threshold_monotonicity(self):
        import numpy as np

        rng = np.random.default_rng(1)
        convs = [
            Conversation([f"u{i}-{j}" for j in range(rng.integers(1, 4))])
            for i in range(100)
        ]

        def noisy_score(texts):
            return [(hash(t) % 1000) / 1000 for t in texts]

        kept = {}
        for t in (0.5, 0.7, 0.9):
            retained, _ = filter_conversations(convs, noisy_score, t)
            kept[t] = {id(c) for c in retained}
        assert kept[0.9] <= kept[0.7] <= kept[0.5]

    def test_order_preserved(self):
        convs = [Conversation([f"忧愁{i}"]) for i in range(10)]
        retained, _ = filter_conversations(convs, sentinel_score_fn, 0.7)
        assert [c.utterances for c in retained] == [c.utterances for c in convs]

    def test_histogram_counts_all_utterances(self):
        convs = [Conversation(["忧愁", "闲聊", "闲聊"]), Conversation(["闲聊"])]
        _, report = filter_conversations(convs, sentinel_score_fn, 0.7)
        assert sum(report.score_histogram) == 4


class TestStats:
    def test_annotated_seed_proportions(self):
        stats = corpus_stats(related=32477, casual=74280)
        assert stats.related_fraction == pytest.approx(0.304, abs=5e-4)

    def test_large_scale_retention(self):
        stats = corpus_stats(related=3_100_000, casual=5_900_000)
        assert stats.related_fraction == pytest.approx(0.344, abs=5e-4)

    def test_empty_corpus(self):
        stats = corpus_stats(related=0, casual=0)
        assert stats.total == 0
        assert stats.related_fraction is None


class TestPairs:
    def test_pairwise_grouping(self):
        convs = [Conversation(["q1", "a1", "q2", "a2"]), Conversation(["q3", "a3"])]
        assert conversations_to_pairs(convs) == [("q1", "a1"), ("q2", "a2"), ("q3", "a3")]

    def test_dangling_utterance_dropped(self):
        convs = [Conversation(["q1", "a1", "odd"])]
        assert conversations_to_pairs(convs) == [("q1", "a1")]


@given(
    st.lists(
        st.lists(st.text(alphabet="你好忧愁快乐", min_size=1, max_size=6), min_size=1, max_size=4),
        max_size=8,
    )
)
def test_parse_serialize_round_trip(groups):
    convs = [Conversation(list(utts)) for utts in groups]
    out = io.StringIO()
    write_conv_file(convs, out)
    parsed = list(parse_conv_file(io.StringIO(out.getvalue())))
    assert [c.utterances for c in parsed] == [c.utterances for c in convs]
