import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from moodbot.errors import InvalidInputError, ParseError
from moodbot.text import (
    EmbeddingTable,
    IndexedSeq,
    TextCodec,
    clean_text,
    compute_pad_length,
    load_embeddings,
    load_labeled_dataset,
    pad_truncate,
    segment,
    tokens_to_indices,
)

cjk_text = st.text(alphabet=st.characters(codec="utf-8"), max_size=40)


class TestCleanText:
    def test_mixed_ascii_cjk(self):
        assert clean_text("abc123你好!") == "你好"

    def test_all_removed(self):
        assert clean_text("hello!") == ""

    def test_digits_inside_cjk(self):
        assert clean_text("我爱2019年") == "我爱年"

    def test_cjk_punctuation_removed(self):
        assert clean_text("你好，世界。") == "你好世界"

    def test_whitespace_removed(self):
        assert clean_text("你 好\n世界") == "你好世界"

    def test_passthrough_profile(self):
        assert clean_text("hello! 你好", profile="none") == "hello! 你好"

    @given(cjk_text)
    def test_idempotent(self, raw):
        once = clean_text(raw)
        assert clean_text(once) == once


class TestSegment:
    def test_exact_cover(self):
        assert segment("你好世界", {"你好", "世界"}) == ["你好", "世界"]

    def test_empty_lexicon_falls_back_to_chars(self):
        assert segment("你好世界", set()) == ["你", "好", "世", "界"]

    def test_greedy_longest_match(self):
        assert segment("研究生命", {"研究生", "研究", "生命"}) == ["研究生", "命"]

    @given(st.text(alphabet="你好世界研究生命的是", max_size=30))
    def test_concatenation_identity(self, text):
        toks = segment(text, {"你好", "世界", "研究生", "研究", "生命"})
        assert "".join(toks) == text


def write_embedding_file(path, rows, header=None, dim=3):
    lines = [header if header is not None else f"{len(rows)} {dim}"]
    for word, vec in rows:
        lines.append(word + " " + " ".join(str(v) for v in vec))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


class TestLoadEmbeddings:
    def test_basic(self, tmp_path):
        f = tmp_path / "emb.txt"
        write_embedding_file(f, [("你好", [0.1, 0.2, 0.3]), ("世界", [1.0, 2.0, 3.0])])
        table = load_embeddings(f)
        assert table.size == 2
        assert table.dim == 3
        assert table.vectors[0] == pytest.approx([0.0, 0.0, 0.0])
        assert table.lookup("你好") == 1
        assert table.vectors[2] == pytest.approx([1.0, 2.0, 3.0])

    def test_cap(self, tmp_path):
        f = tmp_path / "emb.txt"
        rows = [(f"w{i}", [float(i)] * 2) for i in range(50)]
        write_embedding_file(f, rows, dim=2)
        table = load_embeddings(f, cap=10)
        assert table.size == 10
        assert table.words == [f"w{i}" for i in range(10)]

    def test_duplicate_keeps_first(self, tmp_path):
        f = tmp_path / "emb.txt"
        write_embedding_file(
            f, [("你", [1.0, 1.0, 1.0]), ("你", [2.0, 2.0, 2.0]), ("好", [3.0, 3.0, 3.0])]
        )
        table = load_embeddings(f)
        assert table.size == 2
        assert table.vectors[table.lookup("你")] == pytest.approx([1.0, 1.0, 1.0])

    def test_dim_mismatch_reports_line(self, tmp_path):
        f = tmp_path / "emb.txt"
        f.write_text("2 3\n你 0.1 0.2 0.3\n好 0.1 0.2\n", encoding="utf-8")
        with pytest.raises(ParseError) as exc:
            load_embeddings(f)
        assert exc.value.line == 3

    def test_bad_header(self, tmp_path):
        f = tmp_path / "emb.txt"
        f.write_text("banana\n", encoding="utf-8")
        with pytest.raises(ParseError) as exc:
            load_embeddings(f)
        assert exc.value.line == 1

    def test_truncated_file(self, tmp_path):
        f = tmp_path / "emb.txt"
        f.write_text("3 2\n你 0.1 0.2\n", encoding="utf-8")
        with pytest.raises(ParseError):
            load_embeddings(f)


class TestIndices:
    def make_table(self):
        return EmbeddingTable.random(["你好", "世界", "研究"], dim=4, seed=0)

    def test_lookup(self):
        table = self.make_table()
        assert tokens_to_indices(["你好"], table).indices == (table.lookup("你好"),)

    def test_unknown_maps_to_zero(self):
        table = self.make_table()
        assert tokens_to_indices(["火星"], table).indices == (0,)

    def test_order_preserved(self):
        table = self.make_table()
        seq = tokens_to_indices(["世界", "火星", "你好"], table)
        assert seq.indices == (table.lookup("世界"), 0, table.lookup("你好"))

    def test_indices_always_valid_rows(self):
        table = self.make_table()
        seq = tokens_to_indices(["你好", "甲", "乙", "研究"], table)
        assert all(0 <= i <= table.size for i in seq.indices)


class TestPadLength:
    def test_spec_example(self):
        data = [IndexedSeq(tuple(range(n))) for n in range(1, 21)]
        assert compute_pad_length(data, 0.95) == 19

    def test_all_equal(self):
        data = [IndexedSeq((1,) * 7)] * 5
        assert compute_pad_length(data, 0.95) == 7

    def test_full_coverage(self):
        data = [IndexedSeq((1,) * n) for n in (2, 9, 4)]
        assert compute_pad_length(data, 1.0) == 9

    def test_empty_dataset(self):
        with pytest.raises(InvalidInputError):
            compute_pad_length([], 0.95)

    @given(
        st.lists(st.integers(0, 30), min_size=1, max_size=60),
        st.floats(0.01, 1.0),
    )
    def test_matches_enumeration_oracle(self, lengths, coverage):
        data = [IndexedSeq((0,) * n) for n in lengths]
        got = compute_pad_length(data, coverage)
        n = len(lengths)
        best = None
        for cand in range(0, max(lengths) + 1):
            covered = sum(1 for x in lengths if x <= cand)
            if covered / n >= coverage:
                best = cand
                break
        assert got == best


class TestPadTruncate:
    def test_pre_pad(self):
        assert pad_truncate(IndexedSeq((5, 6)), 4).indices == (0, 0, 5, 6)

    def test_pre_truncate_keeps_suffix(self):
        assert pad_truncate(IndexedSeq((1, 2, 3, 4, 5)), 3).indices == (3, 4, 5)

    def test_identity(self):
        seq = IndexedSeq((1, 2, 3))
        assert pad_truncate(seq, 3) is seq

    def test_bad_length(self):
        with pytest.raises(InvalidInputError):
            pad_truncate(IndexedSeq((1,)), 0)

    @given(st.lists(st.integers(0, 9), max_size=20), st.integers(1, 12))
    def test_length_and_idempotence(self, indices, length):
        seq = IndexedSeq(tuple(indices))
        once = pad_truncate(seq, length)
        assert len(once) == length
        assert pad_truncate(once, length).indices == once.indices


class TestCodec:
    def test_encode_pipeline(self):
        table = EmbeddingTable.random(["你好", "世界"], dim=3, seed=1)
        codec = TextCodec(table)
        seq = codec.encode("你好, world, 世界!")
        assert seq.indices == (table.lookup("你好"), table.lookup("世界"))
        assert seq.source_text == "你好, world, 世界!"

    def test_decode_skips_pad(self):
        table = EmbeddingTable.random(["你好", "世界"], dim=3, seed=1)
        codec = TextCodec(table)
        assert codec.decode([0, 1, 0, 2]) == "你好世界"

    def test_custom_segmenter(self):
        table = EmbeddingTable.random(["你", "好"], dim=3, seed=1)
        codec = TextCodec(table, segmenter=lambda s: list(s))
        assert codec.encode("你好").indices == (1, 2)


def test_load_labeled_dataset(tmp_path):
    f = tmp_path / "data.tsv"
    f.write_text("1\t你好世界\n0\t糟糕透了\n", encoding="utf-8")
    assert load_labeled_dataset(f) == [(1, "你好世界"), (0, "糟糕透了")]


def test_load_labeled_dataset_bad_label(tmp_path):
    f = tmp_path / "data.tsv"
    f.write_text("2\t你好\n", encoding="utf-8")
    with pytest.raises(ParseError) as exc:
        load_labeled_dataset(f)
    assert exc.value.line == 1
