from __future__ import annotations

from typing import Callable


class ToolRegistry:
    def __init__(self):
        self._tools: dict[str, Callable[..., object]] = {}

    def register(self, name: str, fn: Callable[..., object]) -> None:
        self._tools[name] = fn

    def __contains__(self, name: str) -> bool:
        return name in self._tools

    def names(self) -> list[str]:
        return sorted(self._tools)

    def invoke(self, name: str, args: dict) -> str:
        if name not in self._tools:
            raise KeyError(f"unknown tool {name!r}")
        return str(self._tools[name](**(args or {})))


def _add(a, b):
    result = a + b
    return int(result) if float(result).is_integer() else result


def default_tools() -> ToolRegistry:
    reg = ToolRegistry()
    reg.register("add", _add)
    reg.register("echo", lambda text="": text)
    reg.register("word_count", lambda text="": len(str(text).split()))
    reg.register("upper", lambda text="": str(text).upper())
    return reg
