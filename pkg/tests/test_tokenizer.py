import pytest
from hypothesis import given, strategies as st

from vegagen.tokenizer import (EOS, NUM_SPECIALS, PAD, REPLACEMENT_CHAR, SOS,
                               SPECIAL_SYMBOLS, UNK, BadIndex, TooLong,
                               Vocabulary, build_vocab, decode, encode)


def test_special_ids_are_fixed():
    assert (PAD, SOS, EOS, UNK) == (0, 1, 2, 3)
    assert SPECIAL_SYMBOLS == ("<pad>", "<s>", "</s>", "<unk>")


def test_build_vocab_sorts_and_dedups():
    v = build_vocab(["baa", "ac"])
    assert v.symbols[:NUM_SPECIALS] == SPECIAL_SYMBOLS
    assert v.chars == ("a", "b", "c")
    assert v.size == NUM_SPECIALS + 3


def test_build_vocab_rejects_empty():
    with pytest.raises(ValueError):
        build_vocab([])


def test_encode_appends_eos():
    v = build_vocab(["ab"])
    ids = encode("ab", v, max_len=10)
    assert ids[-1] == EOS
    assert len(ids) == 3


def test_encode_decode_round_trip():
    v = build_vocab(['{"mark":"bar"}'])
    text = '{"mark":"bar"}'
    assert decode(encode(text, v, 100), v) == text


def test_unknown_char_becomes_unk_then_replacement():
    v = build_vocab(["ab"])
    ids = encode("axb", v, 10)
    assert ids[1] == UNK
    assert decode(ids, v) == f"a{REPLACEMENT_CHAR}b"


def test_too_long_boundary():
    v = build_vocab(["ab"])
    assert len(encode("a" * 9, v, max_len=10)) == 10
    with pytest.raises(TooLong):
        encode("a" * 10, v, max_len=10)


def test_max_len_must_allow_eos():
    v = build_vocab(["a"])
    with pytest.raises(ValueError):
        encode("", v, max_len=1)


def test_decode_stops_at_eos_and_skips_pad_sos():
    v = build_vocab(["abc"])
    a = v.index_of("a")
    b = v.index_of("b")
    assert decode([PAD, a, SOS, b, EOS, a, a], v) == "ab"


def test_decode_bad_index():
    v = build_vocab(["a"])
    with pytest.raises(BadIndex):
        decode([v.size], v)
    with pytest.raises(BadIndex):
        decode([-1], v)


def test_index_of_unknown_is_unk():
    v = build_vocab(["a"])
    assert v.index_of("z") == UNK
    assert v.index_of("a") == NUM_SPECIALS


def test_vocabulary_is_value_like():
    assert build_vocab(["ab"]) == Vocabulary(SPECIAL_SYMBOLS + ("a", "b"))


@given(st.text(min_size=0, max_size=120))
def test_round_trip_any_text(text):
    v = build_vocab([text or "x"])
    assert decode(encode(text, v, 500), v) == text


@given(st.text(min_size=1, max_size=60), st.text(min_size=0, max_size=60))
def test_encoding_with_superset_vocab_matches(corpus_text, text):
    # encoding under a larger vocabulary still round-trips provided every
    # character of the text is covered
    v = build_vocab([corpus_text + text if text else corpus_text])
    assert decode(encode(text, v, 500), v) == text
