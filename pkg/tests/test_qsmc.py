import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from qfedgd import qsmc
from qfedgd.qsmc import CrtConfig, OverflowAbort

WALKTHROUGH = CrtConfig((23, 29), 100, (0.5, 0.5), signed=False)


def crt_oracle(residues, moduli):
    S = math.prod(moduli)
    return next(x for x in range(S) if all(x % d == r for r, d in zip(residues, moduli)))


@pytest.mark.parametrize("g, mu", [(2, 100), (0, 0), (8.66, 433), (3.46, 173), (5, 250)])
def test_scale_to_integers(g, mu):
    assert qsmc.scale_to_integers([g], 0.5, 100)[0] == mu


def test_scale_rounds_half_away():
    assert list(qsmc.scale_to_integers([0.005, -0.005], 1.0, 100)) == [1, -1]


def test_scale_outside_window():
    with pytest.raises(OverflowAbort):
        qsmc.scale_to_integers([10.0], 1.0, 100, CrtConfig((23,), 100, (1.0,)))


@pytest.mark.parametrize("mu, shares", [(100, (8, 13)), (173, (12, 28)), (250, (20, 18)), (433, (19, 27)), (0, (0, 0))])
def test_compute_shares(mu, shares):
    assert qsmc.compute_shares(mu, (23, 29)) == shares


def test_aggregate_residue_examples():
    assert qsmc.aggregate_residue([8 + 6, 20 + 10], 7, 23) == 5
    assert qsmc.aggregate_residue([13 + 4, 18 + 1], 29 - 5, 29) == 2
    with pytest.raises(ValueError):
        qsmc.aggregate_residue([1], 0, 23, round_modulus=29)


def test_masks_cancel_for_zero_values():
    for seed in range(20):
        r = qsmc.run_ghz_round(3, 23, seed=seed)
        masked = [o % 23 for o in r.clients]
        assert qsmc.aggregate_residue(masked, r.server, 23) == 0


@pytest.mark.parametrize("res, total", [((5, 2), 350), ((8, 26), 606), ((0, 0), 0)])
def test_crt_examples(res, total):
    assert qsmc.crt_reconstruct(res, (23, 29)) == total


def test_crt_signed_window():
    assert qsmc.crt_reconstruct(qsmc.compute_shares(-17, (23, 29)), (23, 29), signed=True) == -17
    with pytest.raises(ValueError, match="coprime"):
        qsmc.crt_reconstruct((1, 1), (6, 4))


@given(st.lists(st.sampled_from([2, 3, 5, 7, 11, 13, 17, 19, 23, 29]), min_size=1, max_size=3, unique=True), st.data())
def test_crt_roundtrip(moduli, data):
    S = math.prod(moduli)
    x = data.draw(st.integers(0, S - 1))
    r = qsmc.compute_shares(x, moduli)
    assert qsmc.crt_reconstruct(r, moduli) == x == crt_oracle(r, moduli)


def test_config_validation():
    with pytest.raises(ValueError, match="coprime"):
        CrtConfig((6, 9), 10, (1.0,))
    with pytest.raises(ValueError):
        CrtConfig((1,), 10, (1.0,))
    assert WALKTHROUGH.S == 667 and WALKTHROUGH.K == 2


def test_for_bound_picks_enough_primes():
    c = CrtConfig.for_bound(50.0, 1e4, (0.5, 0.5))
    assert c.S > 2 * 50 * 1e4
    assert all(qsmc.is_prime(d) for d in c.moduli)


def test_ghz_example_round_sums_to_zero():
    assert qsmc.GhzRound(23, 7, (6, 10)).check()


def test_ghz_two_level_statevector():
    p = qsmc.ghz_distribution(1, 2)
    assert np.allclose(p, [[0.5, 0], [0, 0.5]])


def test_ghz_statevector_cap():
    with pytest.raises(MemoryError):
        qsmc.ghz_distribution(5, 23)


@pytest.mark.parametrize("backend", ["sampler", "statevector"])
def test_ghz_sum_zero(backend):
    o = qsmc.sample_ghz_rounds(2, 5, 2000, backend, seed=3)
    assert np.all(o.sum(axis=1) % 5 == 0)


def test_ghz_statevector_is_uniform_on_sum_zero_set():
    p = qsmc.ghz_distribution(2, 3)
    idx = np.indices(p.shape).sum(axis=0) % 3 == 0
    assert np.allclose(p[idx], 1 / 9) and np.allclose(p[~idx], 0)


def test_masked_share_marginal_is_uniform():
    d, n = 23, 46_000
    o = qsmc.sample_ghz_rounds(2, d, n, seed=9)
    for secret in (0, 7, 22):
        masked = (secret + o[:, 1]) % d
        assert stats.chisquare(np.bincount(masked, minlength=d)).pvalue > 0.001


def test_decoy_check_honest_channel():
    r = qsmc.run_decoy_check(50, 23, attacker=False, seed=1)
    assert r.errors == 0 and r.passed


def test_decoy_check_disabled():
    r = qsmc.run_decoy_check(0, 23, attacker=True, seed=1)
    assert r.passed and r.error_rate == 0


def test_decoy_per_photon_error_rate():
    d, n = 7, 200_000
    r = qsmc.run_decoy_check(n, d, attacker=True, seed=2)
    p = (d - 1) / (2 * d)
    assert abs(r.error_rate - p) < 4 * math.sqrt(p * (1 - p) / n)


def test_decoy_bases_are_unitary():
    V = qsmc.decoy_bases(5)
    for b in V:
        assert np.allclose(b.conj().T @ b, np.eye(5))


def test_walkthrough_protocol():
    res = qsmc.run_protocol([(2, 3.46), (5, 8.66)], WALKTHROUGH, seed=0, masks={(0, 23): (7, 6, 10)})
    assert list(res.G) == [3.5, 6.06]
    assert [t["residues"] for t in res.transcript.totals] == [[5, 2], [8, 26]]
    assert res.transcript.rounds[0]["outcomes"] == [7, 6, 10]
    assert res.transcript.verify()


def test_pinned_round_must_sum_to_zero():
    with pytest.raises(ValueError):
        qsmc.run_protocol([(2,), (5,)], WALKTHROUGH, masks={(0, 23): (1, 1, 1)})


def test_single_client_passthrough():
    res = qsmc.run_protocol([(1.23456, -0.5)], CrtConfig((101, 103, 107), 1e4, (1.0,)), seed=1)
    assert np.allclose(res.G, [1.23456, -0.5], atol=1e-4)


def test_overflow_abort():
    with pytest.raises(OverflowAbort):
        qsmc.run_protocol([(5,), (5,)], CrtConfig((23,), 100, (0.5, 0.5)))


def test_attack_aborts_without_output():
    res = qsmc.run_protocol([(1,), (2,)], CrtConfig((23,), 1, (0.5, 0.5)), "intercept_resend", seed=4, delta=20)
    assert res.aborted and res.G is None and res.transcript.replay() is None


def test_transcript_json_roundtrip_and_replay():
    res = qsmc.run_protocol([(1.5, -2.0), (0.25, 4.0)], CrtConfig((101, 103), 100, (0.5, 0.5)), seed=3, delta=5)
    data = json.loads(res.transcript.to_json())
    tr = qsmc.ProtocolTranscript.from_dict(data)
    assert tr.replay() == res.transcript.G
    kinds = {m["kind"] for m in data["messages"]}
    assert kinds == {"announce", "decoy_result", "masked_share"}
    assert set(data["messages"][0]) == {"sender", "receiver", "kind", "component", "modulus", "round", "payload"}


def test_transcript_tampering_detected():
    res = qsmc.run_protocol([(1.5,), (0.25,)], CrtConfig((101, 103), 100, (0.5, 0.5)), seed=3)
    tr = res.transcript
    share = next(m for m in tr.messages if m["kind"] == "masked_share")
    share["payload"] = (share["payload"] + 1) % share["modulus"]
    assert not tr.verify()


def test_same_seed_same_transcript():
    a = qsmc.run_protocol([(1.5,), (0.25,)], CrtConfig((101,), 10, (0.5, 0.5)), seed=8, delta=3)
    b = qsmc.run_protocol([(1.5,), (0.25,)], CrtConfig((101,), 10, (0.5, 0.5)), seed=8, delta=3)
    assert a.transcript.to_json() == b.transcript.to_json()


@given(st.integers(1, 8), st.integers(1, 16), st.integers(0, 2**32 - 1))
def test_protocol_matches_weighted_sum(K, D, seed):
    rng = np.random.default_rng(seed)
    grads = rng.uniform(0, 10, (K, D))
    sizes = rng.integers(1, 20, K)
    beta = CrtConfig.weights(sizes)
    gamma = 1e3
    cfg = CrtConfig.for_bound(10.0, gamma, beta, signed=False)
    res = qsmc.run_protocol(grads, cfg, seed=seed)
    assert np.all(np.abs(res.G - qsmc.plain_sum(grads, beta)) <= K * 0.5 / gamma + 1e-12)


@given(st.integers(0, 2**32 - 1))
def test_protocol_signed_gradients(seed):
    rng = np.random.default_rng(seed)
    grads = rng.uniform(-5, 5, (3, 4))
    cfg = CrtConfig.for_bound(5.0, 1e4, (0.2, 0.3, 0.5))
    res = qsmc.run_protocol(grads, cfg, seed=seed)
    assert np.allclose(res.G, qsmc.plain_sum(grads, cfg.beta), atol=3 * 0.5e-4)
