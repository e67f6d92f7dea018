import math

import pytest

import wrag


def animals():
    return wrag.Corpus([("d1", "cat sat"), ("d2", "cat cat ran"), ("d3", "dog ran")])


def test_tokenize():
    assert wrag.tokenize("Hello, World! It's 2024.") == ["hello", "world", "it", "s", "2024"]


def test_bm25_dog():
    index = wrag.Bm25Index.build(animals())
    assert index.score("dog", "d3") == pytest.approx(0.546, abs=1e-3)
    hits = index.retrieve("dog", 3)
    assert hits[0][0] == "d3"
    assert [pid for pid, _ in index.retrieve("zebra", 3)] == ["d1", "d2", "d3"]


def test_errors_map_to_python():
    with pytest.raises(wrag.InvalidArgument):
        wrag.Bm25Index.build(wrag.Corpus([]))
    with pytest.raises(wrag.DataError):
        wrag.Corpus([("p1", "a"), ("p1", "b")])
    assert issubclass(wrag.DataError, wrag.Error)


def test_mock_backends():
    assert wrag.containment_score("the red fox", "q", "red dog") == 0.5
    prompt = wrag.qa_prompt(["The color of Bo Ka is red. More text."], "What color?")
    assert wrag.mock_generate(prompt, 20) == "The color of Bo Ka is red."
    assert wrag.mock_generate(wrag.qa_prompt([], "What color?")) == "I do not know."


def test_metrics_and_losses():
    assert wrag.token_f1("2018 winter olympics", "2018") == pytest.approx(0.5)
    assert wrag.rouge_l("a b c", "a c") == pytest.approx(0.8)
    t, p = wrag.paired_t_test([1, 2, 3, 4, 5], [0, 0, 0, 0, 0])
    assert t == pytest.approx(4.242640687119285)
    assert p == pytest.approx(0.013235599563682695, rel=1e-6)
    assert wrag.mnr_loss([[0.3, 0.3], [0.3, 0.3]]) == pytest.approx(2 * math.log(2))
    assert wrag.pairwise_loss(0.5, 0.5) == pytest.approx(math.log(2))


def test_synthetic_dataset():
    data = wrag.make_synthetic(questions=24, passages=300)
    assert len(data.corpus) == 300
    assert len(data.qa_pairs) == 24
    for qa in data.qa_pairs:
        (gold,) = data.qrels[qa.qid]
        assert any(a.split()[0] in data.corpus.text(gold) for a in qa.answers)
