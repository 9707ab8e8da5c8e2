from pathlib import Path

import pytest
import yaml

from Modnet.exceptions import ConfigError, ContractError
from Modnet.problems import Rte1D
from Modnet.readfiles import deep_merge, readconfig, readgrid, resolve

configs = Path(__file__).resolve().parent.parent / "configs"

minimal = {
    "name": "minimal",
    "problem": {"family": "poisson2d"},
    "family": {"parameter": "a", "grid": [10, 20], "k": 2},
    "schedule": {"epochs": 1, "interior": 10, "boundary": 5, "seed": 0},
}


def field_of(changes):
    with pytest.raises(ConfigError) as error:
        resolve(deep_merge(minimal, changes))
    return error.value.field


@pytest.mark.parametrize("path", sorted(configs.glob("*.yaml")), ids=lambda p: p.name)
def test_shipped_configs_validate(path):
    config = readconfig(path)
    assert config.name == path.stem
    assert config.family.k >= 1


def test_example1():
    config = readconfig(configs / "example1.yaml")
    assert config.problem.family == "poisson2d"
    assert config.family.grid == tuple(10.0 * i for i in range(1, 21))
    assert config.family.k == 10
    assert config.evaluation.tests == (15.0, 105.0, 155.0)
    assert config.variants == {}


def test_example3_variants():
    config = readconfig(configs / "example3.yaml")
    assert list(config.variants) == ["pde_only", "data_only", "combined"]
    data_only = config.variants["data_only"]
    assert data_only.weights.pde == 0.0
    assert data_only.weights.data == 1.0
    assert data_only.labels.counts == (10, 10)
    assert config.variants["pde_only"].labels is None


@pytest.mark.parametrize("name", ["example4.yaml", "example4-operator.yaml"])
def test_transport_green_networks(name):
    config = readconfig(configs / name)
    assert config.problem.green.hidden == (128, 256, 256, 128)
    assert config.problem.green.activation == "tanh"
    assert all(v.problem.green.hidden == (128, 256, 256, 128) for v in config.variants.values())


def test_transport_default_green_network():
    assert Rte1D().green.hidden == (128, 256, 256, 128)
    config = resolve(deep_merge(minimal, {"problem": {"family": "rte1d"}}))
    assert config.problem.green.hidden == (128, 256, 256, 128)
    assert config.problem.green.activation == "tanh"


def test_seed_and_overrides():
    config = readconfig(configs / "example1-smoke.yaml", seed=7, overrides={"schedule": {"epochs": 2}})
    assert config.schedule.seed == 7
    assert config.schedule.epochs == 2
    assert config.raw["schedule"]["seed"] == 7


def test_defaults_are_applied():
    config = resolve(minimal)
    assert config.problem.green.hidden == (128, 128, 128, 128)
    assert config.problem.quadrature == (10, 10)
    assert config.schedule.learning_rate == 1e-3
    assert config.schedule.patience is None
    assert config.chunk_rows == 32768
    assert config.weights.bc == 1.0


def test_zero_members_per_epoch():
    assert field_of({"family": {"k": 0}}) == "family.k"


@pytest.mark.parametrize(
    "changes,field",
    [
        ({"problem": {"family": "heat1d"}}, "problem.family"),
        ({"weights": {"data": 1.0}}, "weights.data"),
        ({"weights": {"pde": -1.0}}, "weights.pde"),
        ({"loss": "ritz"}, "loss"),
        ({"schedule": {"epochs": 2.5}}, "schedule.epochs"),
        ({"family": {"grid": []}}, "family.grid"),
        ({"family": {"grid": {"start": 1, "step": 1}}}, "family.grid.count"),
        ({"networks": {"green": {"activation": "relu"}}}, "networks.green.activation"),
        ({"quadrature": {"interior": [10]}}, "quadrature.interior"),
        ({"labels": {"kind": "v", "counts": [3]}}, "labels.kind"),
        ({"evaluation": {"slices": {"v": [0.5]}}}, "evaluation.slices.v"),
    ],
)
def test_invalid_fields_are_named(changes, field):
    assert field_of(changes) == field


def test_variational_loss_is_poisson_only():
    changes = {"problem": {"family": "auxiliary2d"}, "family": {"parameter": "scale", "grid": [1.0], "k": 1},
               "loss": "variational"}
    assert field_of(changes) == "loss"


def test_missing_required_field():
    raw = deep_merge(minimal, {})
    del raw["schedule"]["seed"]
    with pytest.raises(ConfigError) as error:
        resolve(raw)
    assert error.value.field == "schedule.seed"


def test_broken_variant_names_the_variant():
    assert field_of({"variants": {"bad": {"family": {"k": 0}}}}) == "variants.bad"


def test_unreadable_files(tmp_path):
    with pytest.raises(ConfigError):
        readconfig(tmp_path / "absent.yaml")
    broken = tmp_path / "broken.yaml"
    broken.write_text("name: [unclosed\n")
    with pytest.raises(ConfigError):
        readconfig(broken)
    listing = tmp_path / "list.yaml"
    listing.write_text(yaml.safe_dump([1, 2]))
    with pytest.raises(ConfigError) as error:
        readconfig(listing)
    assert error.value.exit_code == 2


def test_transport_options():
    raw = deep_merge(minimal, {
        "problem": {"family": "rte1d", "coefficients": {"sigma_t": 1.0, "sigma_a": 0.5}},
        "family": {"parameter": "a2", "grid": [0.01], "k": 1, "sampling": "fixed"},
        "weights": {"bc_left": 2.0},
    })
    config = resolve(raw)
    assert config.problem.inflow_nodes == (30, 30)
    assert config.weights.left == 2.0
    assert config.weights.right == 1.0
    with pytest.raises(ConfigError) as error:
        resolve(deep_merge(raw, {"quadrature": {"velocity": 29}}))
    assert error.value.field == "quadrature.velocity"


def test_deep_merge_keeps_the_base():
    base = {"a": {"b": 1, "c": 2}}
    merged = deep_merge(base, {"a": {"b": 3}, "d": None})
    assert merged == {"a": {"b": 3, "c": 2}, "d": None}
    assert base == {"a": {"b": 1, "c": 2}}


def test_missing_grid_file(tmp_path):
    with pytest.raises(ContractError):
        readgrid(tmp_path / "absent.csv", ("x",))
