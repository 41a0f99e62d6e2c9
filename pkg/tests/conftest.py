from __future__ import annotations

import pytest

from mfsim.core import (
    ActionText,
    ActivityLevel,
    AgentProfile,
    DomainTag,
    Event,
    FriendsLevel,
    Gender,
    InfluenceLevel,
    Provenance,
)


def make_profile(**overrides) -> AgentProfile:
    base = dict(
        location="Beijing",
        description="sports fan",
        gender=Gender.female,
        friends_level=FriendsLevel.moderate,
        influence_level=InfluenceLevel.low,
        activity_level=ActivityLevel.highly_active,
        verified=False,
        verification_type=None,
    )
    base.update(overrides)
    return AgentProfile(**base)


def make_event(texts: list[str], event_id: str = "ev-1", topic: str = "a rumor",
               profiles: list[AgentProfile] | None = None) -> Event:
    if profiles is None:
        profiles = [make_profile() for _ in texts]
    timeline = tuple(
        (profiles[i], ActionText(text=t, author_index=i, step=i,
                                 provenance=Provenance.ground_truth))
        for i, t in enumerate(texts)
    )
    return Event(event_id=event_id, topic=topic, domain_tag=DomainTag.news,
                 timeline=timeline)


@pytest.fixture
def text_event() -> Event:
    return make_event([
        "Repost.",
        "Is it true? Too many rumors going around.",
        "Stop spreading fake news!",
        "Looking for the truth.",
        "//@News: sharing this",
        "No way, really?",
    ])
