import numpy as np
import pytest

from dfci.core import DataError, Dataset, MeanHypothesis, OrderedSupport
from dfci.distributions import Bernoulli, FiniteSupport, near_uniform
from dfci.fileio import (
    InputError,
    read_dataset,
    read_mean,
    read_spec,
    read_support,
    write_dataset,
    write_mean,
    write_spec,
    write_support,
)


def put(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestDataset:
    def test_round_trip(self, tmp_path):
        d = Dataset(("a", "b,c", "a"), [0.0, 0.125, 1.0])
        write_dataset(tmp_path / "d.csv", d)
        back = read_dataset(tmp_path / "d.csv")
        assert back.keys == d.keys and np.array_equal(back.y, d.y)

    def test_blank_lines_skipped(self, tmp_path):
        assert len(read_dataset(put(tmp_path, "d.csv", "x,y\na,0.5\n\nb,1\n"))) == 2

    def test_bad_value_reports_line(self, tmp_path):
        with pytest.raises(InputError, match=r"d\.csv:3: y 1\.5 outside"):
            read_dataset(put(tmp_path, "d.csv", "x,y\na,0.5\nb,1.5\n"))

    def test_not_a_number(self, tmp_path):
        with pytest.raises(InputError, match=":2: y 'abc'"):
            read_dataset(put(tmp_path, "d.csv", "x,y\na,abc\n"))

    def test_field_count(self, tmp_path):
        with pytest.raises(InputError, match=":4: expected 2 fields"):
            read_dataset(put(tmp_path, "d.csv", "x,y\na,0\nb,1\nc,0.5,9\n"))

    def test_header(self, tmp_path):
        with pytest.raises(InputError, match=":1: expected header"):
            read_dataset(put(tmp_path, "d.csv", "key,y\na,0\n"))

    def test_nan_rejected(self, tmp_path):
        with pytest.raises(DataError):
            read_dataset(put(tmp_path, "d.csv", "x,y\na,nan\n"))


class TestSupport:
    def test_round_trip(self, tmp_path):
        s = OrderedSupport(("z", "a", "m m"))
        write_support(tmp_path / "s.txt", s)
        assert read_support(tmp_path / "s.txt") == s

    def test_duplicate(self, tmp_path):
        with pytest.raises(InputError, match=r":3: duplicate key 'a' \(first on line 1\)"):
            read_support(put(tmp_path, "s.txt", "a\nb\na\n"))


class TestMean:
    def test_default_row(self, tmp_path):
        m = read_mean(put(tmp_path, "m.csv", "x,mu\na,0.2\n__default__,0.9\n"))
        assert m("a") == 0.2 and m("other") == 0.9 and not m.knows("other")

    def test_default_when_missing(self, tmp_path):
        assert read_mean(put(tmp_path, "m.csv", "x,mu\na,0.2\n"))("b") == 0.5

    def test_round_trip(self, tmp_path):
        m = MeanHypothesis({"a": 1 / 3, "b": 0.0}, 0.7)
        write_mean(tmp_path / "m.csv", m)
        back = read_mean(tmp_path / "m.csv")
        assert back.values == m.values and back.default == m.default

    def test_out_of_range(self, tmp_path):
        with pytest.raises(InputError, match=":2: mu -0.1"):
            read_mean(put(tmp_path, "m.csv", "x,mu\na,-0.1\n"))


def test_spec_round_trip(tmp_path):
    laws = (Bernoulli(0.1), FiniteSupport((0.0, 0.5), (0.25, 0.75)), Bernoulli(0.9))
    spec = near_uniform(3, 1.5, seed=2, laws=laws)
    write_spec(tmp_path / "s.json", spec)
    back = read_spec(tmp_path / "s.json")
    assert back.keys == spec.keys and np.array_equal(back.probs, spec.probs) and back.laws == spec.laws
