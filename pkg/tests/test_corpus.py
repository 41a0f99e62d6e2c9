from __future__ import annotations

import json
from collections import Counter

import numpy as np
import pytest
from scipy import stats

from mfsim.core import FriendsLevel, InfluenceLevel, ActivityLevel
from mfsim.corpus import (
    Corpus,
    CorpusSource,
    CorpusValidationError,
    SyntheticGenConfig,
    activity_level_from_count,
    friends_level_from_count,
    generate_synthetic,
    influence_level_from_count,
    load_corpus,
    majority_action,
    no_feedback_ablation,
    resample_states,
    save_corpus,
    self_exciting_config,
    split_corpus,
    toy_action_symbol,
    toy_profile,
    toy_state_symbol,
)

from conftest import make_event, make_profile


def corpus_line(event_id: str, texts: list[str], followers: int = 250) -> str:
    return json.dumps({
        "event_id": event_id,
        "topic": "topic",
        "domain_tag": "news",
        "timeline": [
            {
                "step": i,
                "profile": {
                    "location": "Beijing",
                    "description": "user",
                    "gender": "female",
                    "friends_count": 100,
                    "followers_count": followers,
                    "interactions_count": 50,
                    "verified": False,
                    "verification_type": None,
                },
                "text": t,
            }
            for i, t in enumerate(texts)
        ],
    })


def test_load_two_valid_events(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text(corpus_line("e1", ["a", "b"]) + "\n" + corpus_line("e2", ["c"]) + "\n")
    corpus = load_corpus(path)
    assert len(corpus.events) == 2
    assert corpus.source is CorpusSource.file
    assert corpus.events[0].timeline[0][1].text == "a"


def test_load_duplicate_event_id_fails(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text(corpus_line("e1", ["a"]) + "\n" + corpus_line("e1", ["b"]) + "\n")
    with pytest.raises(CorpusValidationError, match="duplicate"):
        load_corpus(path)


def test_load_malformed_json_reports_line_number(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text(corpus_line("e1", ["a"]) + "\n{not json\n")
    with pytest.raises(ValueError, match="line 2"):
        load_corpus(path)


def test_follower_count_250_ingests_as_low(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text(corpus_line("e1", ["a"], followers=250) + "\n")
    corpus = load_corpus(path)
    assert corpus.events[0].timeline[0][0].influence_level is InfluenceLevel.low


@pytest.mark.parametrize("count,expected", [
    (0, FriendsLevel.very_few), (9, FriendsLevel.very_few), (10, FriendsLevel.few),
    (30, FriendsLevel.few), (31, FriendsLevel.moderate), (1000, FriendsLevel.moderate),
    (1001, FriendsLevel.many), (3000, FriendsLevel.many), (3001, FriendsLevel.very_many),
])
def test_friends_buckets(count, expected):
    assert friends_level_from_count(count) is expected


@pytest.mark.parametrize("count,expected", [
    (0, InfluenceLevel.very_low), (100, InfluenceLevel.very_low),
    (101, InfluenceLevel.low), (500, InfluenceLevel.low),
    (501, InfluenceLevel.moderate), (1000, InfluenceLevel.moderate),
    (1001, InfluenceLevel.high), (10000, InfluenceLevel.high),
    (10001, InfluenceLevel.very_high),
])
def test_follower_buckets(count, expected):
    assert influence_level_from_count(count) is expected


@pytest.mark.parametrize("count,expected", [
    (0, ActivityLevel.inactive), (9, ActivityLevel.inactive),
    (10, ActivityLevel.moderately_active), (100, ActivityLevel.moderately_active),
    (101, ActivityLevel.highly_active),
])
def test_activity_buckets(count, expected):
    assert activity_level_from_count(count) is expected


def test_save_load_roundtrip_file_corpus(tmp_path):
    event = make_event(["a", "b", "c"])
    corpus = Corpus(events=(event,), source=CorpusSource.file)
    path = tmp_path / "c.jsonl"
    save_corpus(corpus, path)
    assert load_corpus(path) == corpus


def test_save_load_roundtrip_synthetic_corpus(tmp_path):
    corpus = generate_synthetic(self_exciting_config(seed=3, num_events=2,
                                                     steps_per_event=4,
                                                     agents_per_step=4))
    path = tmp_path / "syn.jsonl"
    save_corpus(corpus, path)
    assert load_corpus(path) == corpus


def test_split_5_events_fraction_08():
    events = tuple(make_event(["x"], event_id=f"e{i}") for i in range(5))
    corpus = Corpus(events=events, source=CorpusSource.file)
    train, test = split_corpus(corpus, 0.8, seed=7)
    assert len(train.events) == 4 and len(test.events) == 1
    ids = {e.event_id for e in train.events} | {e.event_id for e in test.events}
    assert ids == {f"e{i}" for i in range(5)}
    train2, test2 = split_corpus(corpus, 0.8, seed=7)
    assert train2 == train and test2 == test


def test_split_5000_events_gives_4000_1000():
    events = tuple(make_event(["x"], event_id=f"e{i}") for i in range(5000))
    corpus = Corpus(events=events, source=CorpusSource.file)
    train, test = split_corpus(corpus, 0.8, seed=1)
    assert len(train.events) == 4000 and len(test.events) == 1000


def test_split_rejects_bad_fraction():
    corpus = Corpus(events=(make_event(["x"]),), source=CorpusSource.file)
    for fraction in (0.0, 1.0, -0.5, 2.0):
        with pytest.raises(ValueError):
            split_corpus(corpus, fraction, seed=0)


def test_resample_zero_count_is_empty():
    assert resample_states(make_event(["a"]), 0, seed=0) == []


def test_resample_single_profile_gives_identical_states():
    event = make_event(["a"])
    states = resample_states(event, 5, seed=1)
    assert len(states) == 5
    assert all(s == states[0] for s in states)
    assert states[0].topic == event.topic


def test_resample_empty_timeline_with_positive_count_fails():
    event = make_event([])
    with pytest.raises(ValueError):
        resample_states(event, 3, seed=0)


def test_resample_frequencies_track_empirical_distribution():
    # 75% of entries carry profile P1, 25% P2; frequencies at n=10k within +/-2%
    p1 = make_profile(description="one")
    p2 = make_profile(description="two")
    profiles = [p1, p1, p1, p2]
    event = make_event(["a", "b", "c", "d"], profiles=profiles)
    states = resample_states(event, 10_000, seed=11)
    share_p1 = sum(1 for s in states if s.profile == p1) / len(states)
    assert abs(share_p1 - 0.75) < 0.02
    counts = Counter(s.profile.description for s in states)
    chi2 = stats.chisquare([counts["one"], counts["two"]], [7500, 2500])
    assert chi2.pvalue > 0.001


def test_resample_deterministic_per_seed():
    profiles = [make_profile(description=f"user-{i}") for i in range(3)]
    event = make_event(["a", "b", "c"], profiles=profiles)
    assert resample_states(event, 20, seed=5) == resample_states(event, 20, seed=5)
    assert resample_states(event, 20, seed=5) != resample_states(event, 20, seed=6)


def test_toy_profile_symbol_roundtrip():
    assert toy_state_symbol(toy_profile(3)) == 3
    assert toy_action_symbol("2") == 2
    with pytest.raises(ValueError):
        toy_state_symbol(make_profile())
    with pytest.raises(ValueError):
        toy_action_symbol("hello")


def test_majority_action_tie_breaks_low():
    assert majority_action([1, 3, 3, 1]) == 1
    assert majority_action([2, 2, 0]) == 2


def test_synthetic_config_validates_matrices():
    bad = np.full((2, 2, 2), 0.4)
    with pytest.raises(ValueError, match="sum to 1"):
        SyntheticGenConfig(num_events=1, steps_per_event=1, state_alphabet_size=2,
                           action_alphabet_size=2, latent_alphabet_size=2,
                           latent_transition=bad)
    with pytest.raises(ValueError, match="alphabet"):
        SyntheticGenConfig(num_events=1, steps_per_event=1, state_alphabet_size=1)


def test_synthetic_regenerates_byte_identically():
    cfg = self_exciting_config(seed=9, num_events=3, steps_per_event=5, agents_per_step=8)
    assert generate_synthetic(cfg) == generate_synthetic(cfg)
    other = self_exciting_config(seed=10, num_events=3, steps_per_event=5, agents_per_step=8)
    assert generate_synthetic(cfg) != generate_synthetic(other)


def test_emission_independent_of_latent_matches_rows():
    # Monte Carlo of the marginal: per-state action frequencies track the
    # emission row when the latent has no influence.
    rng = np.random.default_rng(0)
    n_s, n_z, n_a = 3, 4, 4
    rows = rng.dirichlet(np.ones(n_a) * 3.0, size=n_s)
    emission = np.repeat(rows[:, None, :], n_z, axis=1)
    cfg = SyntheticGenConfig(
        num_events=1, steps_per_event=2500, state_alphabet_size=n_s,
        action_alphabet_size=n_a, latent_alphabet_size=n_z, agents_per_step=16,
        emission=emission, seed=21,
    )
    corpus = generate_synthetic(cfg)
    counts = np.zeros((n_s, n_a))
    for profile, action in corpus.events[0].timeline:
        counts[toy_state_symbol(profile), toy_action_symbol(action.text)] += 1
    freqs = counts / counts.sum(axis=1, keepdims=True)
    assert np.all(np.abs(freqs - rows) < 0.02)


def test_identity_transition_keeps_latent_constant():
    n_z, n_a = 4, 3
    identity = np.zeros((n_z, n_a, n_z))
    for z in range(n_z):
        identity[z, :, z] = 1.0
    cfg = SyntheticGenConfig(
        num_events=2, steps_per_event=50, state_alphabet_size=2,
        action_alphabet_size=n_a, latent_alphabet_size=n_z, agents_per_step=4,
        latent_transition=identity, seed=2,
    )
    corpus = generate_synthetic(cfg)
    for event in corpus.events:
        latents = corpus.latents[event.event_id]
        assert len(set(latents)) == 1


def test_self_exciting_majority_share_beats_no_feedback_baseline():
    # 10,000-step rollout: the feedback loop funnels the population into the
    # anchor action far beyond what emission alone produces.
    def modal_share(cfg) -> float:
        corpus = generate_synthetic(cfg)
        symbols = [toy_action_symbol(a.text) for _, a in corpus.events[0].timeline]
        counts = np.bincount(symbols, minlength=cfg.action_alphabet_size)
        return counts.max() / counts.sum()

    base = self_exciting_config(seed=5, num_events=1, steps_per_event=10_000,
                                agents_per_step=8)
    share_feedback = modal_share(base)
    share_ablation = modal_share(no_feedback_ablation(base))
    assert share_feedback > share_ablation + 0.05


def test_synthetic_latents_are_oracle_only(tmp_path):
    corpus = generate_synthetic(self_exciting_config(seed=1, num_events=1,
                                                     steps_per_event=3,
                                                     agents_per_step=4))
    event = corpus.events[0]
    # nothing in the event itself leaks the latent sequence
    assert "latent" not in json.dumps({
        "topic": event.topic,
        "texts": [a.text for _, a in event.timeline],
        "profiles": [p.description for p, _ in event.timeline],
    })
    assert corpus.latents[event.event_id]
