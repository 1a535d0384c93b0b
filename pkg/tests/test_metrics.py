import pytest
from hypothesis import given
from hypothesis import strategies as st

from framevqa.metrics import (
    DegenerateTable, KeyMismatch, MissingPrediction, Prediction, accuracy, breakdown,
    chi_square_2x2, correct_counts, difference_histogram,
)
from framevqa.realize import QASample


def shortcut_chi_square(a, b, c, d, yates):
    """Closed-form 2x2 statistic n(|ad-bc| - n/2)^2 / (row and column product)."""
    n = a + b + c + d
    num = abs(a * d - b * c)
    if yates:
        num = max(num - n / 2, 0)
    return n * num ** 2 / ((a + b) * (c + d) * (a + c) * (b + d))


def gold(answers, key="verb"):
    return [QASample(f"i{k}", f"v{k % 2}", "Who is x?", a, "AGENT", "test", (), f"s{k}") for k, a in enumerate(answers)]


def preds(answers):
    return [Prediction(f"s{k}", a) for k, a in enumerate(answers)]


def test_accuracy():
    g = gold(["a", "b", "c", "d"])
    assert accuracy(preds(["a", "b", "c", "d"]), g) == 100.0
    assert accuracy(preds(["A", "x", "y", "z"]), g) == 25.0
    with pytest.raises(MissingPrediction):
        accuracy(preds(["a"]), g)
    assert correct_counts(preds(["a", "x", "c", "z"]), g) == (2, 2)


def test_reference_chi_square():
    assert chi_square_2x2(((34905, 53065), (39522, 48448))) == pytest.approx(496.1854, abs=1e-3)
    assert chi_square_2x2(((34905, 53065), (39522, 48448)), yates=False) == pytest.approx(496.4004, abs=1e-3)


def test_chi_square_hand_computed():
    # expected counts 12.5, 7.5, 12.5, 7.5 -> 0.5 + 0.8333 + 0.5 + 0.8333
    assert chi_square_2x2(((10, 10), (15, 5)), yates=False) == pytest.approx(8 / 3)
    assert chi_square_2x2(((10, 10), (10, 10))) == 0.0
    with pytest.raises(DegenerateTable):
        chi_square_2x2(((0, 0), (3, 4)))


_cell = st.integers(0, 500)


@given(_cell, _cell, _cell, _cell)
def test_chi_square_properties(a, b, c, d):
    if 0 in (a + b, c + d, a + c, b + d):
        return
    t = ((a, b), (c, d))
    plain = chi_square_2x2(t, yates=False)
    yates = chi_square_2x2(t, yates=True)
    assert plain == pytest.approx(shortcut_chi_square(a, b, c, d, False), rel=1e-9, abs=1e-9)
    assert yates <= plain + 1e-12
    assert chi_square_2x2(((c, d), (a, b))) == pytest.approx(yates, rel=1e-12, abs=1e-12)
    assert chi_square_2x2(((b, a), (d, c))) == pytest.approx(yates, rel=1e-12, abs=1e-12)
    if abs(a * d - b * c) >= (a + b + c + d) / 2:
        assert yates == pytest.approx(shortcut_chi_square(a, b, c, d, True), rel=1e-9, abs=1e-9)


def test_breakdown():
    g = gold(["a", "b", "c", "d"])
    assert breakdown(preds(["a", "b", "c", "d"]), g, "verb") == {"v0": 100.0, "v1": 100.0}
    assert breakdown(preds(["a", "x", "c", "d"]), g, "verb") == {"v0": 100.0, "v1": 50.0}
    assert breakdown(preds(["a", "x", "c", "d"]), g, "wh") == {"who": 75.0}


def test_difference_histogram():
    a = {"x": 50.0, "y": 20.0, "z": 10.0}
    h = difference_histogram(a, a)
    assert h["0%"] == 3 and sum(h.values()) == 3
    h = difference_histogram({"v": 10.0}, {"v": 45.0})
    assert h["(30%,40%]"] == 1
    h = difference_histogram({"p": 50, "q": 50, "r": 50}, {"p": 38, "q": 50, "r": 55})
    assert (h["(-20%,-10%]"], h["0%"], h["(0%,10%]"]) == (1, 1, 1)
    assert sum(h.values()) == 3
    assert h["(-10%,0%)"] == 0
    assert difference_histogram({"v": 100.0}, {"v": 0.0})["[-100%,-90%]"] == 1
    with pytest.raises(KeyMismatch):
        difference_histogram({"a": 1}, {"b": 1})


@given(st.dictionaries(st.text(max_size=3), st.tuples(st.floats(0, 100), st.floats(0, 100)), max_size=20))
def test_histogram_sum_law(accs):
    a = {k: v[0] for k, v in accs.items()}
    b = {k: v[1] for k, v in accs.items()}
    assert sum(difference_histogram(a, b).values()) == len(accs)
