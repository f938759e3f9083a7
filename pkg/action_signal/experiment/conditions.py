"""Training schemes and test-time action conditions."""

from enum import Enum


class TrainingScheme(str, Enum):
    """Which inputs a dynamics model sees during training."""

    ACTIONS_ONLY = "ActionsOnly"
    STATES_ONLY = "StatesOnly"
    STATES_AND_ACTIONS = "StatesAndActions"

    @property
    def uses_states(self) -> bool:
        return self is not TrainingScheme.ACTIONS_ONLY

    @property
    def uses_actions(self) -> bool:
        return self is not TrainingScheme.STATES_ONLY


class EvalCondition(str, Enum):
    """Substitution applied to future actions of the test records."""

    TRUE = "True"
    ZERO = "Zero"
    SHUFFLED = "Shuffled"
    MEAN = "Mean"
