import enum
from typing import Self

from attrs import define, frozen


class MessageLevel(enum.Enum):
    # same numbers as loguru's levels
    DEBUG = 10
    INFO = 20
    WARNING = 30
    ERROR = 40
    CRITICAL = 50


@frozen
class Message:
    level: MessageLevel
    message: str

    @classmethod
    def builder(cls) -> "MessageBuilder":
        return MessageBuilder()


@define
class MessageBuilder:
    command: str | None = None
    strategy: str | None = None
    rate: float | None = None
    rep: int | None = None

    def context(self) -> list[str]:
        parts = []
        if self.command is not None:
            parts.append(f"command:{self.command}")
        if self.strategy is not None:
            parts.append(f"strategy:{self.strategy}")
        if self.rate is not None:
            parts.append(f"rate:{self.rate:g}")
        if self.rep is not None:
            parts.append(f"rep:{self.rep}")
        return parts

    def build(self, level: MessageLevel, message: str) -> Message:
        return Message(level=level, message=" ".join([*self.context(), message]))

    def add(
        self,
        *,
        command: str | None = None,
        strategy: str | None = None,
        rate: float | None = None,
        rep: int | None = None,
    ) -> Self:
        updates = {"command": command, "strategy": strategy, "rate": rate, "rep": rep}
        for name, value in updates.items():
            if value is not None:
                setattr(self, name, value)
        return self
