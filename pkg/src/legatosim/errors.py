"""Exception hierarchy shared by all legatosim modules."""


class LegatoError(Exception):
    """Base class for every error raised by legatosim."""


class UnknownProfile(LegatoError, KeyError):
    def __init__(self, kind: str, node_class: str):
        self.kind = kind
        self.node_class = node_class
        super().__init__(f"no profile entry for (kind={kind!r}, node_class={node_class!r})")

    def __str__(self) -> str:
        return self.args[0]


class UnknownPlatform(LegatoError, KeyError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"unknown platform preset {name!r}")

    def __str__(self) -> str:
        return self.args[0]


class OutOfRange(LegatoError, ValueError):
    """Voltage outside (0, v_nom]."""


class CrashRegion(LegatoError, ValueError):
    """Voltage below v_crash: the device does not respond."""


class InvalidFootprint(LegatoError, ValueError):
    pass


class DuplicateDataset(LegatoError, ValueError):
    pass


class NothingToCheckpoint(LegatoError, ValueError):
    pass


class IntervalUndefined(LegatoError, ValueError):
    """MTBF does not exceed the checkpoint cost."""


class ScenarioError(LegatoError, ValueError):
    """Semantic problem in a scenario file."""
