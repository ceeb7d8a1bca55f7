import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from papr_lab.errors import BudgetError, DomainError
from papr_lab.mcsa import (
    McsaConfig,
    PilotConfig,
    default_pilot_indices,
    draw_signs,
    exhaustive_search,
    insert_pilots,
    mcsa_search,
    pilot_magnitude,
    search_batch,
)
from papr_lab.signal import Modulation, SpectrumSymbol, idft, map_bits, map_qpsk, papr_db

from conftest import direct_idft, random_qpsk


def brute_force(symbol):
    """Independent re-evaluation: direct-summation IDFT of every insertion."""
    data = symbol.data
    mag = math.sqrt(np.mean(np.abs(data) ** 2))
    out = {}
    for signs in itertools.product((1, -1), repeat=symbol.num_pilots):
        s = np.array(symbol.values)
        s[list(symbol.pilot_indices)] = np.array(signs) * mag
        p = np.abs(direct_idft(s)) ** 2
        out[signs] = 10 * math.log10(p.max() / p.mean())
    return out


class TestConfig:
    def test_invalid(self):
        with pytest.raises(DomainError):
            McsaConfig(5.0, 0)
        with pytest.raises(DomainError):
            PilotConfig((1, 0), 1.0)
        with pytest.raises(DomainError):
            PilotConfig((1,), 0.0)

    def test_default_indices(self):
        assert default_pilot_indices(15, 2) == (0, 7)
        assert default_pilot_indices(30, 2) == (0, 15)
        assert default_pilot_indices(8, 3) == (0, 2, 4)
        with pytest.raises(DomainError):
            default_pilot_indices(4, 4)


class TestInsertPilots:
    def test_example(self):
        sym = SpectrumSymbol(np.r_[0, map_qpsk([0, 0]), 0, map_qpsk([1, 1])], (0, 2))
        out = insert_pilots(sym, PilotConfig((1, -1), 1.0))
        assert out.values[0] == 1 + 0j and out.values[2] == -1 + 0j

    def test_no_pilots_identity(self, rng):
        sym = random_qpsk(rng, 6)
        assert insert_pilots(sym, PilotConfig((), 1.0)) is sym

    def test_data_untouched(self, rng):
        sym = random_qpsk(rng, 15, (0, 7))
        out = insert_pilots(sym, PilotConfig((-1, 1), 1.0))
        assert np.array_equal(out.data, sym.data)

    def test_length_mismatch(self, rng):
        with pytest.raises(DomainError):
            insert_pilots(random_qpsk(rng, 8, (0, 4)), PilotConfig((1,), 1.0))


class TestDrawSigns:
    def test_first_row_all_plus(self):
        s = draw_signs(123, 16, 3)
        assert s.shape == (16, 3)
        assert (s[0] == 1).all()
        assert set(np.unique(s)) <= {-1, 1}

    def test_prefix_consistent(self):
        assert np.array_equal(draw_signs(9, 40, 2)[:10], draw_signs(9, 10, 2))

    def test_roughly_uniform(self):
        s = draw_signs(5, 4001, 2)[1:]
        assert abs((s == -1).mean() - 0.5) < 0.02


class TestMcsaSearch:
    def test_reachable_target(self, rng):
        sym = random_qpsk(rng, 15, (0, 7))
        res = mcsa_search(sym, McsaConfig(100.0, 32), 1)
        assert res.met_target and res.trials_used == 1
        assert res.pilots.signs == (1, 1)

    def test_unreachable_target(self, rng):
        sym = random_qpsk(rng, 15, (0, 7))
        cfg = McsaConfig(-100.0, 20)
        res = mcsa_search(sym, cfg, 42)
        assert not res.met_target and res.trials_used == 20
        mag = pilot_magnitude(sym)
        cands = [papr_db(idft(insert_pilots(sym, PilotConfig(s, mag)))) for s in draw_signs(42, 20, 2)]
        assert res.papr_db == min(cands)

    def test_papr_matches_reported_pilots(self, rng):
        for seed in range(30):
            sym = random_qpsk(rng, 15, (0, 7))
            res = mcsa_search(sym, McsaConfig(4.5, 256), seed)
            assert res.papr_db == papr_db(idft(insert_pilots(sym, res.pilots)))
            assert res.trials_used <= 256
            if res.met_target:
                assert res.papr_db <= 4.5

    def test_covering_draws_match_exhaustive(self, rng):
        for seed in range(20):
            sym = random_qpsk(rng, 8, (0, 4))
            signs = draw_signs(seed, 64, 2)
            if len({tuple(r) for r in signs}) < 4:
                continue
            assert mcsa_search(sym, McsaConfig(-100, 64), seed).papr_db == exhaustive_search(sym).papr_db

    def test_early_stop_trial_count(self, rng):
        sym = random_qpsk(rng, 15, (0, 7))
        mag = pilot_magnitude(sym)
        signs = draw_signs(3, 64, 2)
        p = [papr_db(idft(insert_pilots(sym, PilotConfig(s, mag)))) for s in signs]
        target = sorted(p)[5]
        res = mcsa_search(sym, McsaConfig(target, 64), 3)
        first = next(i for i, v in enumerate(p) if v <= target)
        assert res.trials_used == first + 1 and res.papr_db == p[first]

    def test_no_pilots(self, rng):
        with pytest.raises(DomainError):
            mcsa_search(random_qpsk(rng, 8), McsaConfig(5.0), 0)

    def test_batch_equals_single(self, rng):
        syms = [random_qpsk(rng, 15, (0, 7)) for _ in range(12)]
        cfg = McsaConfig(5.0, 100)
        mags = np.array([pilot_magnitude(s) for s in syms])
        signs, papr, trials, met = search_batch(
            np.stack([s.values for s in syms]), (0, 7), mags, cfg, list(range(12))
        )
        for i, s in enumerate(syms):
            r = mcsa_search(s, cfg, i)
            assert (tuple(signs[i]), papr[i], trials[i], met[i]) == (
                r.pilots.signs, r.papr_db, r.trials_used, r.met_target
            )

    def test_memoized_path_matches_plain(self, rng):
        # N_t > 2**N_p takes the lookup-table path; N_t <= 2**N_p does not
        sym = random_qpsk(rng, 16, (0, 4, 8, 12))
        small = mcsa_search(sym, McsaConfig(-100, 16), 11)
        large = mcsa_search(sym, McsaConfig(-100, 17), 11)
        mag = pilot_magnitude(sym)
        p = [papr_db(idft(insert_pilots(sym, PilotConfig(s, mag)))) for s in draw_signs(11, 17, 4)]
        assert small.papr_db == min(p[:16]) and large.papr_db == min(p)

    def test_qam16_magnitude(self):
        bits = np.random.default_rng(3).integers(0, 2, 4 * 14)
        values = np.zeros(16, dtype=complex)
        values[[i for i in range(16) if i not in (0, 8)]] = map_bits(bits, Modulation.QAM16)
        sym = SpectrumSymbol(values, (0, 8), Modulation.QAM16)
        res = mcsa_search(sym, McsaConfig(-100, 8), 0)
        assert res.pilots.magnitude == pytest.approx(math.sqrt(np.mean(np.abs(sym.data) ** 2)))


class TestExhaustive:
    def test_single_pilot(self, rng):
        sym = random_qpsk(rng, 8, (3,))
        res = exhaustive_search(sym)
        bf = brute_force(sym)
        assert res.trials_used == 2 and res.met_target
        assert res.papr_db == pytest.approx(min(bf.values()), abs=1e-12)

    def test_tie_goes_to_first(self):
        # every sign pair gives the same PAPR for this symbol
        bits = [0, 1, 0, 0, 0, 1, 1, 0, 1, 1, 1, 1]
        values = np.zeros(8, dtype=complex)
        values[[1, 3, 4, 5, 6, 7]] = map_qpsk(bits)
        sym = SpectrumSymbol(values, (0, 2))
        bf = brute_force(sym)
        assert max(bf.values()) - min(bf.values()) < 1e-12
        assert exhaustive_search(sym).pilots.signs == (1, 1)

    def test_matches_brute_force(self, rng):
        for _ in range(50):
            sym = random_qpsk(rng, 8, (0, 4))
            res = exhaustive_search(sym)
            bf = brute_force(sym)
            assert res.papr_db == pytest.approx(min(bf.values()), abs=1e-12)
            assert bf[res.pilots.signs] == pytest.approx(min(bf.values()), abs=1e-12)

    def test_budget_guard(self):
        k = 24
        values = np.zeros(k, dtype=complex)
        values[21:] = map_qpsk([0] * 6)
        with pytest.raises(BudgetError):
            exhaustive_search(SpectrumSymbol(values, tuple(range(21))))


seeds = st.integers(0, 2**64 - 1)
symbols = st.integers(0, 2**32 - 1).map(lambda s: random_qpsk(np.random.default_rng(s), 8, (0, 4)))


class TestProperties:
    @given(symbols, seeds, st.integers(1, 64))
    def test_never_beats_exhaustive(self, sym, seed, n_t):
        res = mcsa_search(sym, McsaConfig(-100, n_t), seed)
        assert res.papr_db >= exhaustive_search(sym).papr_db

    @given(symbols, seeds, st.integers(1, 40), st.integers(0, 40))
    def test_budget_monotone(self, sym, seed, n_t, extra):
        lo = mcsa_search(sym, McsaConfig(-100, n_t), seed)
        hi = mcsa_search(sym, McsaConfig(-100, n_t + extra), seed)
        assert hi.papr_db <= lo.papr_db

    @given(symbols, seeds, st.floats(0, 10))
    def test_deterministic(self, sym, seed, target):
        cfg = McsaConfig(target, 32)
        assert mcsa_search(sym, cfg, seed) == mcsa_search(sym, cfg, seed)

    @given(symbols, seeds, st.floats(0, 10), st.floats(0, 5))
    def test_lower_target_needs_more_trials(self, sym, seed, target, drop):
        hi = mcsa_search(sym, McsaConfig(target, 32), seed)
        lo = mcsa_search(sym, McsaConfig(target - drop, 32), seed)
        assert lo.trials_used >= hi.trials_used

    @given(symbols, seeds)
    def test_never_worse_than_all_plus(self, sym, seed):
        res = mcsa_search(sym, McsaConfig(-100, 8), seed)
        base = papr_db(idft(insert_pilots(sym, PilotConfig((1, 1), pilot_magnitude(sym)))))
        assert res.papr_db <= base
