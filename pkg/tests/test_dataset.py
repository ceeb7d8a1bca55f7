import hashlib
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from papr_lab import dataset as ds
from papr_lab.errors import DatasetFormatError, DomainError
from papr_lab.mcsa import mcsa_search
from papr_lab.seeding import LABEL_SALT, derive, row_seed
from papr_lab.signal import Modulation, SpectrumSymbol


def small_meta(n=100, seed=3, **kw):
    kw.setdefault("mcsa_target_db", 5.0)
    kw.setdefault("mcsa_max_trials", 64)
    return ds.make_meta(kw.pop("K", 15), kw.pop("N_p", 2), n, seed, **kw)


@pytest.fixture(scope="module")
def small():
    return ds.generate(small_meta())


class TestMeta:
    def test_split_index(self):
        assert small_meta(10).split_index == 7
        assert small_meta(200_000).split_index == 140_000
        assert small_meta(15, split_fraction=0.5).split_index == 8

    def test_widths(self):
        m = small_meta()
        assert (m.feature_width, m.N_p) == (26, 2)
        assert m.pilot_indices == (0, 7)

    @pytest.mark.parametrize(
        "kw", [dict(n=9), dict(N_p=15), dict(N_p=0), dict(split_fraction=1.0), dict(mcsa_max_trials=0)]
    )
    def test_invalid(self, kw):
        with pytest.raises(DomainError):
            small_meta(**kw)

    def test_dict_round_trip(self):
        m = small_meta(modulation="QAM16")
        assert ds.DatasetMeta.from_dict(json.loads(json.dumps(m.to_dict()))) == m
        assert ds.DatasetMeta.from_dict(m.to_dict()).digest() == m.digest()

    def test_digest_sensitive(self):
        assert small_meta(seed=1).digest() != small_meta(seed=2).digest()

    def test_default_targets(self):
        assert ds.default_target_db(15) == 5.0
        assert ds.default_target_db(30) == 6.5

    @pytest.mark.slow
    @pytest.mark.parametrize("k,target", [(15, 5.0), (30, 6.5)])
    def test_default_targets_follow_rule(self, k, target):
        assert ds.practical_target_db(k) == target

    def test_practical_target_small(self):
        t = ds.practical_target_db(8, symbols=500)
        assert 0 < t < 10 * np.log10(8)


class TestGenerate:
    def test_deterministic(self, small):
        assert ds.generate(small_meta()) == small

    def test_threads_do_not_change_bytes(self, small):
        assert ds.generate(small_meta(), threads=4, chunk=17) == small

    def test_shapes(self, small):
        assert small.features.shape == (100, 26)
        assert small.labels.shape == (100, 2)
        assert small.split_index == 70
        assert len(small.train_features) == 70 and len(small.test_labels) == 30

    def test_labels_are_signed_root_energy(self, small):
        mags = ds.row_magnitudes(small.features)
        assert np.array_equal(np.abs(small.labels), np.repeat(mags[:, None], 2, 1))
        np.testing.assert_allclose(mags, 1.0, rtol=1e-15)

    def test_seed_changes_corpus(self, small):
        assert not np.array_equal(ds.generate(small_meta(seed=4)).features, small.features)

    def test_single_row_regeneration(self, small):
        for r in (0, 42, 99):
            f, lab = ds.generate_rows(small.meta, [r], [small.attempts[r]])
            assert np.array_equal(f[0], small.features[r])
            assert np.array_equal(lab[0], small.labels[r])

    def test_label_consistency(self, small):
        meta = small.meta
        spectra = small.spectra()
        for r in range(0, 100, 7):
            sym = SpectrumSymbol(spectra[r], meta.pilot_indices)
            seed = derive(row_seed(meta.master_seed, r, int(small.attempts[r])), LABEL_SALT)
            res = mcsa_search(sym, meta.mcsa_config, seed)
            assert np.array_equal(res.pilots.values, small.labels[r])

    def test_qam16_labels(self):
        d = ds.generate(small_meta(40, modulation=Modulation.QAM16))
        mags = ds.row_magnitudes(d.features)
        np.testing.assert_allclose(np.abs(d.labels), np.repeat(mags[:, None], 2, 1), rtol=1e-15)
        assert not np.allclose(mags, 1.0)

    def test_disjoint(self, small):
        assert ds.check_disjoint(small)

    def test_duplicate_test_rows_redrawn(self):
        # 4**3 = 64 payloads, so duplicates across the split are certain
        meta = small_meta(60, seed=1, K=4, N_p=1, mcsa_target_db=2.0)
        d = ds.generate(meta)
        assert d.attempts.any()
        assert ds.check_disjoint(d)
        train = {r.tobytes() for r in d.train_features}
        assert not any(r.tobytes() in train for r in d.test_features)
        r = int(np.flatnonzero(d.attempts)[0])
        f, _ = ds.generate_rows(meta, [r], [d.attempts[r]])
        assert np.array_equal(f[0], d.features[r])

    def test_exhausted_space_raises(self):
        # 4 payloads in total: the test partition cannot avoid the training set
        with pytest.raises(DomainError):
            ds.generate(small_meta(40, K=2, N_p=1, mcsa_target_db=1.0))


class TestSampleSpace:
    def test_four_to_the_fifteen(self):
        assert ds.constellation_space(4, 15) == 1_073_741_824

    @pytest.mark.parametrize("m,e,v", [(4, 0, 1), (16, 3, 4096), (4, 13, 67_108_864)])
    def test_power(self, m, e, v):
        assert ds.constellation_space(m, e) == v

    def test_from_meta(self):
        assert ds.sample_space_size(small_meta()) == 4**13
        assert ds.sample_space_size(small_meta(modulation="QAM16")) == 16**13

    def test_exact_big_int(self):
        assert ds.sample_space_size(small_meta(K=30)) == 4**28

    def test_coverage(self):
        c = ds.coverage_fraction(140_000, 1_073_741_824)
        assert f"{100 * c:.2g}" == "0.013"
        assert c == pytest.approx(1.3039e-4, rel=1e-4)
        assert ds.coverage_fraction(0, 5) == 0.0
        assert ds.coverage_fraction(10, 10) == 1.0
        with pytest.raises(DomainError):
            ds.coverage_fraction(1, 0)

    @given(st.integers(1, 16), st.integers(0, 40))
    def test_power_identity(self, m, e):
        assert ds.constellation_space(m, e + 1) == m * ds.constellation_space(m, e)


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


class TestPersistence:
    def test_csv_round_trip(self, small, tmp_path):
        ds.save(small, tmp_path / "d")
        assert ds.load(tmp_path / "d") == small

    def test_bin_round_trip(self, small, tmp_path):
        paths = ds.save(small, tmp_path / "d", binary=True, csv_files=False)
        assert paths["bin"].read_bytes()[:7] == b"PAPRDS1"
        assert len(paths["bin"].read_bytes()) == 7 + 8 * 100 * 28
        assert ds.load(tmp_path / "d") == small

    def test_attempts_survive(self, tmp_path):
        d = ds.generate(small_meta(60, seed=1, K=4, N_p=1, mcsa_target_db=2.0))
        ds.save(d, tmp_path / "t")
        assert ds.load(tmp_path / "t") == d

    def test_same_bytes_twice(self, small, tmp_path):
        a = ds.save(small, tmp_path / "a", binary=True)
        b = ds.save(ds.generate(small_meta()), tmp_path / "b", binary=True)
        for kind in ("features", "labels", "bin"):
            assert sha(a[kind]) == sha(b[kind])

    def test_header(self, small, tmp_path):
        p = ds.save(small, tmp_path / "d")
        assert p["features"].read_text().splitlines()[0].startswith("sc1_re,sc1_im,sc2_re")
        assert p["labels"].read_text().splitlines()[0] == "pilot0,pilot7"

    def test_bad_label(self, small, tmp_path):
        p = ds.save(small, tmp_path / "d")
        lines = p["labels"].read_text().splitlines()
        lines[5] = "0.5,1"
        p["labels"].write_text("\n".join(lines) + "\n")
        with pytest.raises(DatasetFormatError) as err:
            ds.load(tmp_path / "d")
        assert err.value.row == 4 and err.value.field == "pilot0"

    def test_truncated_csv(self, small, tmp_path):
        p = ds.save(small, tmp_path / "d")
        lines = p["features"].read_text().splitlines()
        p["features"].write_text("\n".join(lines[:51]) + "\n")
        with pytest.raises(DatasetFormatError, match="row=50"):
            ds.load(tmp_path / "d")

    def test_short_row(self, small, tmp_path):
        p = ds.save(small, tmp_path / "d")
        lines = p["features"].read_text().splitlines()
        lines[3] = lines[3].rsplit(",", 1)[0]
        p["features"].write_text("\n".join(lines) + "\n")
        with pytest.raises(DatasetFormatError, match="row=2"):
            ds.load(tmp_path / "d")

    def test_garbage_cell(self, small, tmp_path):
        p = ds.save(small, tmp_path / "d")
        lines = p["features"].read_text().splitlines()
        lines[1] = "x" + lines[1]
        p["features"].write_text("\n".join(lines) + "\n")
        with pytest.raises(DatasetFormatError, match="field=sc1_re, row=0"):
            ds.load(tmp_path / "d")

    def test_truncated_bin(self, small, tmp_path):
        p = ds.save(small, tmp_path / "d", binary=True, csv_files=False)
        p["bin"].write_bytes(p["bin"].read_bytes()[: 7 + 8 * 26 * 30])
        with pytest.raises(DatasetFormatError, match="row=30"):
            ds.load(tmp_path / "d")

    def test_bad_schema(self, small, tmp_path):
        p = ds.save(small, tmp_path / "d")
        doc = json.loads(p["meta"].read_text())
        doc["schema_version"] = 99
        p["meta"].write_text(json.dumps(doc))
        with pytest.raises(DatasetFormatError, match="schema_version"):
            ds.load(tmp_path / "d")
