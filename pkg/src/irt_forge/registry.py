"""Name-keyed registry of model definitions.

A registration ties a name (what users type on the command line and what is
written to the ``model`` field of the output) to one of the built-in
parameter schemas, its curve evaluator and its prior defaults::

    from irt_forge import registry
    from irt_forge.models import ModelKind

    registry.register(registry.ModelRegistration("new1pl", ModelKind.ONE_PARAM))

after which ``irt-forge train new1pl data.jsonlines out/`` works in that
process. Names are case-insensitive and stored lowercase.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field

from .errors import RegistryError
from .models import ModelKind, icc
from .vi_engine import PriorSpec

# constrained parameter -> transform from the unconstrained guide space
_TRANSFORMS = {
    "difficulty": "identity",
    "discrimination": "exp",
    "guessing": "sigmoid",
    "feasibility": "sigmoid",
}


@dataclass(frozen=True)
class ModelRegistration:
    name: str
    kind: ModelKind
    curve: Callable | None = None
    priors: PriorSpec = field(default_factory=PriorSpec)
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "name", str(self.name).lower())
        object.__setattr__(self, "kind", ModelKind.parse(self.kind))
        if not self.name:
            raise RegistryError("model name must not be empty")

    @property
    def parameters(self) -> tuple:
        kind = self.kind
        names = ["difficulty"]
        if kind.has_discrimination:
            names.append("discrimination")
        if kind.has_guessing:
            names.append("guessing")
        if kind.has_feasibility:
            names.append("feasibility")
        return tuple(names)

    @property
    def transforms(self) -> dict:
        return {p: _TRANSFORMS[p] for p in self.parameters}

    def evaluate(self, theta, b, a=1.0, c=0.0, lam=1.0):
        if self.curve is not None:
            return self.curve(theta, b, a=a, c=c, lam=lam)
        return icc(self.kind, theta, b, a=a, c=c, lam=lam)


class Registry:
    def __init__(self):
        self._entries = {}

    def register(self, reg: ModelRegistration) -> ModelRegistration:
        if reg.name in self._entries:
            raise RegistryError(f"model {reg.name!r} is already registered")
        self._entries[reg.name] = reg
        return reg

    def unregister(self, name) -> None:
        self._entries.pop(str(name).lower(), None)

    def lookup(self, name) -> ModelRegistration:
        key = str(name).lower()
        try:
            return self._entries[key]
        except KeyError:
            raise RegistryError(
                f"unknown model {name!r}; registered models: {', '.join(self.names())}"
            ) from None

    def names(self) -> list:
        return sorted(self._entries)

    def __contains__(self, name) -> bool:
        return str(name).lower() in self._entries


BUILTINS = ("1pl", "2pl", "3pl", "4pl")

default_registry = Registry()
for _kind in ModelKind:
    default_registry.register(ModelRegistration(_kind.value, _kind))

register = default_registry.register
unregister = default_registry.unregister
lookup = default_registry.lookup
names = default_registry.names
