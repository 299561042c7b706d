import numpy as np
import pytest

from irt_forge import RegistryError, SimulationSpec, fit, registry, simulate
from irt_forge.models import ModelKind, icc_1pl
from irt_forge.registry import ModelRegistration, Registry
from irt_forge.vi_engine import PriorSpec, TrainConfig


@pytest.fixture
def scratch_name():
    name = "scratch1pl"
    yield name
    registry.unregister(name)


class TestRegistry:
    def test_builtins(self):
        for name in registry.BUILTINS:
            assert registry.lookup(name).kind is ModelKind.parse(name)
        assert set(registry.BUILTINS) <= set(registry.names())

    def test_register_and_lookup(self):
        reg = Registry()
        entry = reg.register(ModelRegistration("Custom", "2pl"))
        assert entry.name == "custom"
        assert reg.lookup("CUSTOM") is entry
        assert "custom" in reg

    def test_duplicate(self):
        with pytest.raises(RegistryError):
            registry.register(ModelRegistration("1pl", ModelKind.ONE_PARAM))

    def test_not_found_lists_names(self):
        with pytest.raises(RegistryError) as info:
            registry.lookup("nonexistent")
        message = str(info.value)
        for name in registry.BUILTINS:
            assert name in message

    def test_names_sorted(self):
        reg = Registry()
        for name in ("zeta", "alpha", "mid"):
            reg.register(ModelRegistration(name, "1pl"))
        assert reg.names() == ["alpha", "mid", "zeta"]

    def test_set_of_names(self, scratch_name):
        before = set(registry.names())
        registry.register(ModelRegistration(scratch_name, "1pl"))
        assert set(registry.names()) == before | {scratch_name}
        registry.unregister(scratch_name)
        assert set(registry.names()) == before

    def test_schema(self):
        assert registry.lookup("1pl").parameters == ("difficulty",)
        assert registry.lookup("3pl").parameters == ("difficulty", "discrimination", "guessing")
        assert registry.lookup("4pl").transforms == {
            "difficulty": "identity",
            "discrimination": "exp",
            "feasibility": "sigmoid",
        }

    def test_custom_curve(self):
        reg = ModelRegistration("halfscale", "1pl", curve=lambda theta, b, **_: icc_1pl(theta / 2, b / 2))
        assert reg.evaluate(2.0, 0.0) == pytest.approx(icc_1pl(1.0, 0.0))
        assert registry.lookup("1pl").evaluate(0.3, 0.3) == 0.5

    def test_empty_name(self):
        with pytest.raises(RegistryError):
            ModelRegistration("", "1pl")


class TestTrainingWithRegistration:
    def test_clone_matches_builtin(self, scratch_name):
        registry.register(ModelRegistration(scratch_name, ModelKind.ONE_PARAM))
        ds, _, _ = simulate(SimulationSpec(n_subjects=200, n_items=20, seed=8))
        cfg = TrainConfig(epochs=10, batch_size=512, seed=4)
        assert fit(ds, scratch_name, "svi", cfg).same_estimates(fit(ds, "1pl", "svi", cfg))
        assert fit(ds, scratch_name, "mml").same_estimates(fit(ds, "1pl", "mml"))

    def test_registration_priors_used(self, scratch_name):
        registry.register(ModelRegistration(scratch_name, "1pl", priors=PriorSpec(difficulty_sd=0.1)))
        ds, _, _ = simulate(SimulationSpec(n_subjects=200, n_items=20, seed=8))
        cfg = TrainConfig(epochs=30, batch_size=512, seed=4)
        tight = fit(ds, scratch_name, "svi", cfg)
        loose = fit(ds, "1pl", "svi", cfg)
        assert np.std(tight.items.difficulty) < np.std(loose.items.difficulty)
