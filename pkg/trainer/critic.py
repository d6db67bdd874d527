import logging

from advantage import GroupRewards, group_stats

logger = logging.getLogger(__name__)


class ValueTable:
    """Per-prompt scalar state value, regressed toward the mean group reward.

    One squared-error gradient step per observed group:
    V <- V + lr * (mean_reward - V), kept inside [-1, 1].
    """

    def __init__(self, learning_rate: float = 0.1, initial: float = 0.0):
        if not 0.0 < learning_rate <= 1.0:
            raise ValueError(f"critic learning rate must lie in (0, 1], got {learning_rate}")
        self.learning_rate = learning_rate
        self.initial = initial
        self.values: dict[str, float] = {}

    def value(self, prompt_id: str) -> float:
        return self.values.get(prompt_id, self.initial)

    def update(self, group: GroupRewards) -> float:
        current = self.value(group.prompt_id)
        target = group_stats(group).mean
        updated = current + self.learning_rate * (target - current)
        self.values[group.prompt_id] = min(max(updated, -1.0), 1.0)
        return self.values[group.prompt_id]
