"""Prompt batteries: context templates with one subject slot.

A battery is a list of diverse context templates, each containing exactly
one `{subject}` placeholder, plus the two surface forms that can fill it
(the personalized rare-token phrase and the plain class word).
"""

from dataclasses import dataclass, field
from pathlib import Path

import yaml

PLACEHOLDER = "{subject}"


class BatteryError(ValueError):
    pass


@dataclass(frozen=True)
class PromptBattery:
    battery_id: str
    templates: tuple = field(default_factory=tuple)
    token_personalized: str = "sks"
    token_class: str = "man"

    def __post_init__(self):
        if not self.battery_id:
            raise BatteryError("battery_id must be non-empty")
        if not self.templates:
            raise BatteryError("battery %r has no templates" % self.battery_id)
        seen = set()
        for i, t in enumerate(self.templates):
            if t.count(PLACEHOLDER) != 1:
                raise BatteryError(
                    "battery %r template %d must contain exactly one %s: %r"
                    % (self.battery_id, i, PLACEHOLDER, t)
                )
            if t in seen:
                raise BatteryError("battery %r has duplicate template %r" % (self.battery_id, t))
            seen.add(t)
        if not self.token_personalized or not self.token_class:
            raise BatteryError("both subject tokens must be non-empty")

    @property
    def n(self) -> int:
        return len(self.templates)

    def prompt_id(self, i: int) -> str:
        return "%s-%02d" % (self.battery_id, i)

    def prompts(self, subject: str) -> list:
        return [t.replace(PLACEHOLDER, subject) for t in self.templates]


def load_battery(path) -> PromptBattery:
    try:
        obj = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise BatteryError("%s: %s" % (path, exc)) from exc
    if not isinstance(obj, dict):
        raise BatteryError("%s: battery file must be a mapping" % path)
    unknown = set(obj) - {"battery_id", "templates", "token_personalized", "token_class"}
    if unknown:
        raise BatteryError("%s: unknown keys %s" % (path, sorted(unknown)))
    try:
        return PromptBattery(
            battery_id=obj.get("battery_id", ""),
            templates=tuple(obj.get("templates") or ()),
            token_personalized=obj.get("token_personalized", "sks"),
            token_class=obj.get("token_class", "man"),
        )
    except TypeError as exc:
        raise BatteryError("%s: %s" % (path, exc)) from exc


def builtin_battery_path(name: str) -> Path:
    return Path(__file__).parent / "batteries" / ("%s.yaml" % name)
