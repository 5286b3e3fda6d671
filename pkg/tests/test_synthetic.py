import numpy as np
import pytest
import yaml

from bcmkit.data import load_csv, schema_from_dict
from bcmkit.synthetic import make_planted, schema_document, write_csv

from oracles import mi_permutation_pvalue, mutual_information


def binned(values, bins=4):
    values = np.asarray(values, dtype=float)
    return np.digitize(values, np.quantile(values, np.linspace(0, 1, bins + 1)[1:-1])).tolist()


class TestPlanted:
    def test_layout(self):
        p = make_planted(50, 6, 2, seed=0)
        assert p.noise_ids == (5, 6) and p.informative_ids == (1, 2, 3, 4)
        assert p.schema.feature(1).categories == ("Yes", "No")
        assert p.schema.feature(2).kind == "integer"
        assert set(p.raw.labels.tolist()) == {0, 1}

    def test_seeded(self):
        a, b = make_planted(40, seed=3), make_planted(40, seed=3)
        assert a.raw.columns == b.raw.columns
        np.testing.assert_array_equal(a.raw.labels, b.raw.labels)

    def test_noise_carries_no_information(self):
        p = make_planted(600, 6, 2, kinds="integer", seed=1)
        y = p.raw.labels.tolist()
        for fid in p.noise_ids:
            assert mi_permutation_pvalue(binned(p.raw.columns[fid]), y, n_perm=200) > 0.01
        strongest = binned(p.raw.columns[p.informative_ids[0]])
        assert mi_permutation_pvalue(strongest, y, n_perm=200) < 0.01
        assert mutual_information(strongest, y) > 0.05

    def test_custom_noise_ids(self):
        p = make_planted(30, 5, 1, noise_ids=[2], seed=0)
        assert p.noise_ids == (2,) and 2 not in p.coefficients

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            make_planted(30, 3, 3)
        with pytest.raises(ValueError):
            make_planted(30, kinds="text")


def test_csv_round_trip(tmp_path):
    p = make_planted(40, 4, 1, seed=2)
    write_csv(p, tmp_path / "p.csv")
    schema = schema_from_dict(yaml.safe_load(yaml.safe_dump(schema_document(p.schema))))
    raw = load_csv(tmp_path / "p.csv", schema)
    assert raw.columns == p.raw.columns
    np.testing.assert_array_equal(raw.labels, p.raw.labels)
