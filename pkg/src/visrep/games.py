"""Game registry: which games belong to which evaluation distribution.

The benchmark pre-trains on the 50 in-distribution games and evaluates
fine-tuning on three groups: the same 50 games (ID), 10 held-out games of
similar genres (Near-OOD), and 5 games with unfamiliar mechanics (Far-OOD).
"""

ID_GAMES = (
    "AirRaid", "Amidar", "Asteroids", "Atlantis", "BankHeist",
    "BattleZone", "Berzerk", "Bowling", "Boxing", "Breakout",
    "Carnival", "Centipede", "ChopperCommand", "CrazyClimber", "DemonAttack",
    "DoubleDunk", "ElevatorAction", "Enduro", "FishingDerby", "Freeway",
    "Frostbite", "Gopher", "Gravitar", "Hero", "IceHockey",
    "Jamesbond", "Kangaroo", "Krull", "KungFuMaster", "MontezumaRevenge",
    "MsPacman", "NameThisGame", "Phoenix", "Pitfall", "PrivateEye",
    "Qbert", "RoadRunner", "Robotank", "Skiing", "Solaris",
    "SpaceInvaders", "StarGunner", "Tennis", "TimePilot", "Tutankham",
    "UpNDown", "VideoPinball", "WizardOfWor", "YarsRevenge", "Zaxxon",
)

NEAR_OOD_GAMES = (
    "Alien", "Assault", "Asterix", "BeamRider", "JourneyEscape",
    "Pong", "Pooyan", "Riverraid", "Seaquest", "Venture",
)

FAR_OOD_GAMES = (
    "BasicMath", "HumanCannonball", "Klax", "Othello", "Surround",
)

DISTRIBUTIONS = {
    "id": ID_GAMES,
    "near_ood": NEAR_OOD_GAMES,
    "far_ood": FAR_OOD_GAMES,
}

# Atari full action set; every per-game head predicts over this many actions.
ACTION_SPACE = 18


def distribution_of(game: str) -> str:
    """Return the distribution group a game belongs to."""
    for name, games in DISTRIBUTIONS.items():
        if game in games:
            return name
    raise KeyError(f"unknown game: {game}")
