import numpy as np
import polars as pl
import pytest
from numpy.testing import assert_allclose

from Modnet.evaluation import evaluate, evaluate_member, member_tag, slice_points
from Modnet.problems import NetworkSpec, Poisson2D, Rte1D
from Modnet.readfiles import EvaluationSpec
from Modnet.reference import metrics, poisson_exact

poisson = Poisson2D(quadrature=(3, 3), green=NetworkSpec((6,), "tanh"))


def test_member_tags():
    assert member_tag(poisson, 15.0) == "a_15"
    assert member_tag(Rte1D(), 0.11) == "a2_0.11"


def test_slice_points():
    points = slice_points(poisson, (5, 3), "x", 0.5)
    assert_allclose(points, [[0.5, 0.0], [0.5, 0.5], [0.5, 1.0]])
    points = slice_points(poisson, (5, 3), "y", 1.0)
    assert_allclose(points[:, 0], np.linspace(0.0, 1.0, 5))
    assert np.all(points[:, 1] == 1.0)


def test_poisson_member(tmp_path):
    op = poisson.build_operator(seed=0)
    spec = EvaluationSpec((15.0,), (6, 6), {"x": (0.5,)})
    record, files = evaluate_member(poisson, op, 15.0, spec, str(tmp_path))
    assert [f.split("/")[-1] for f in files] == ["solution_a_15.csv", "slice_a_15_x_0.5.csv"]
    frame = pl.read_csv(files[0])
    assert frame.columns == ["x", "y", "u_pred", "u_ref", "diff"]
    assert frame.height == 36
    assert_allclose(frame["u_ref"], poisson_exact(15.0, frame["x"].to_numpy(), frame["y"].to_numpy()))
    expected = metrics(frame["u_pred"].to_numpy(), frame["u_ref"].to_numpy())
    assert record["rmse"] == pytest.approx(expected["rmse"], rel=1e-12)
    assert record["quantity"] == "u"
    assert pl.read_csv(files[1]).height == 6


def test_transport_member_reports_the_density(tmp_path):
    problem = Rte1D(inflow_nodes=(4, 4), green=NetworkSpec((6,), "tanh"), reference_nx=40, reference_nv=20,
                    density_nodes=10, velocity_nodes=10)
    op = problem.build_operator(seed=1)
    spec = EvaluationSpec((0.01,), (11, 6), {}, density_points=21)
    records, files = evaluate(problem, op, spec, str(tmp_path), cache_dir=str(tmp_path / "cache"))
    (record,) = records
    assert record["quantity"] == "rho"
    assert set(record["solution"]) == {"rmse", "relative_error", "max_error"}
    density = pl.read_csv(tmp_path / "density_a2_0.01.csv")
    assert density.columns == ["x", "rho_pred", "rho_ref", "diff"]
    assert density.height == 21
    assert np.all(density["rho_pred"].to_numpy() > 0)
    assert len(files) == 2
