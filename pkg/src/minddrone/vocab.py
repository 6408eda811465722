"""Label vocabularies shared by the synthesizer, classifier and bridge.

These are closed sets: profiles, stream events and mapping configs all
validate against them, so a typo fails loudly at the edge instead of
silently never matching.
"""

NEUTRAL = "neutral"

#: Trainable mental commands (plus the implicit neutral baseline).
MENTAL_COMMANDS = (
    "push",
    "pull",
    "lift",
    "drop",
    "left",
    "right",
    "rotateLeft",
    "rotateRight",
    "rotateForwards",
    "rotateBackwards",
    "rotateClockwise",
    "rotateAnticlockwise",
)

#: Rule-detected facial expressions.
FACIAL_EXPRESSIONS = (
    "blink",
    "winkL",
    "winkR",
    "frown",
    "surprise",
    "smile",
    "clench",
)

MENTAL_VOCABULARY = (NEUTRAL,) + MENTAL_COMMANDS
FACIAL_VOCABULARY = (NEUTRAL,) + FACIAL_EXPRESSIONS
