"""
Trust between two strangers
===========================

Two phones meet in a cafe, keep meeting, then drift apart. Each side keeps
its own score for the other, so the two directions can disagree.
"""

# %%
# A first meeting: nothing is known yet, so the starting score comes from
# shared interests and apps plus the quality of the meeting itself.
from proxtrust.trust import (
    DEFAULT_PROFILE,
    HEALTH_PROFILE,
    InteractionEvent,
    InteractionKind,
    SessionContext,
    TrustStore,
    apply_interaction,
    transitive_trust,
    verify_authority,
)

store = TrustStore()
alice, bob = 1, 2
ctx = SessionContext(
    interests_a=frozenset({"coffee", "chess"}),
    interests_b=frozenset({"coffee", "running"}),
    apps_a=frozenset({"maps", "chat"}),
    apps_b=frozenset({"chat"}),
)
talk = InteractionEvent(alice, bob, time=0, duration=45, distance=1.0, kind=InteractionKind.CONVERSATION, quality=0.8)
print("alice -> bob after one chat:", round(apply_interaction(store, alice, bob, talk, context=ctx).score, 3))

# bob found the chat less pleasant
meh = InteractionEvent(bob, alice, time=0, duration=45, distance=1.0, kind=InteractionKind.CONVERSATION, quality=0.3)
print("bob -> alice after the same chat:", round(apply_interaction(store, bob, alice, meh, context=ctx).score, 3))

# %%
# Daily hour-long coffee for two weeks. Each meeting nudges the score toward the
# meeting's effective quality.
t = 0
for day in range(14):
    t = (day + 1) * 1440
    apply_interaction(store, alice, bob, InteractionEvent(alice, bob, t, 60, 0.5, InteractionKind.CONVERSATION, 0.9), context=ctx)
print("alice -> bob after two weeks:", round(store.score(alice, bob, now=t), 3))

# %%
# Then they stop meeting. Scores decay toward the baseline with a 30 day
# half-life, applied whenever the score is read.
for months in (1, 2, 6):
    print(f"after {months} month(s) apart:", round(store.score(alice, bob, now=t + months * 30 * 1440), 3))

# %%
# Friends of friends: carol trusts alice a lot, and alice trusts bob, so
# carol gets a transitive opinion of bob.
carol = 3
store.set(carol, alice, 0.9, now=t)
print("carol's view of bob via alice:", round(transitive_trust(store, carol, bob, now=t), 3))

# %%
# Profiles keep contexts apart. A doctor earns health-data trust through
# consultations, which says nothing about the default profile.
doctor = 9
for visit in range(20):
    ev = InteractionEvent(alice, doctor, visit * 1440, duration=1e4, distance=0.0, kind=InteractionKind.HEALTH_CONSULT, quality=0.9)
    apply_interaction(store, alice, doctor, ev, profile=HEALTH_PROFILE)
now = 19 * 1440
print("doctor may see health data:", verify_authority(store, alice, doctor, HEALTH_PROFILE, 0.8, now))
print("doctor trusted in general:", verify_authority(store, alice, doctor, DEFAULT_PROFILE, 0.8, now))
