from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import TrialError

TARGET = "target"
NONTARGET = "nontarget"


@dataclass(frozen=True)
class Trial:
    label: str
    enroll_id: str
    test_id: str

    def __post_init__(self):
        if self.label not in (TARGET, NONTARGET):
            raise TrialError(f"unknown trial label {self.label!r}")
        if self.enroll_id == self.test_id:
            raise TrialError(f"degenerate trial pairs {self.enroll_id} with itself")

    @property
    def is_target(self) -> bool:
        return self.label == TARGET

    def swapped(self) -> "Trial":
        return Trial(self.label, self.test_id, self.enroll_id)


def write_trials(trials, path) -> None:
    with open(path, "w") as f:
        for t in trials:
            f.write(f"{t.label} {t.enroll_id} {t.test_id}\n")


def read_trials(path) -> list[Trial]:
    trials = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 3:
            raise TrialError(f"{path}:{lineno}: expected 'label enroll test', got {line!r}")
        trials.append(Trial(*fields))
    return trials
