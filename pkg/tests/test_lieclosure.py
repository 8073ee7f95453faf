import pytest

from conslaw.lieclosure import (
    DEGREE_CAP,
    DIM_DISAGREEMENT,
    MAX_ITER,
    STAGNATED,
    build_W0,
    check_frobenius,
    closure,
)
from conslaw.models import ModelSpec, build_phi, sample_points

from .conftest import spec


def run(s, samples=3, seed=0, **kw):
    phi = build_phi(s)
    pts = sample_points(s, samples, seed=seed) if s.kind != "custom" else kw.pop("points")
    return phi, closure(phi, [p.coords if hasattr(p, "coords") else p for p in pts], **kw)


def custom(dim, *phi):
    return ModelSpec("custom", phi=phi, dim=dim)


class TestCounts:
    @pytest.mark.parametrize("s,laws", [
        (spec("linear", 1, 1, 1), 1),
        (spec("linear", 2, 2, 2), 3),
        (spec("linear", 3, 3, 3), 6),
        (spec("linear", 2, 2, 2, 2), 6),
        (spec("relu2_nobias", 3, 2, 2), 2),
        (spec("relu2_bias", 3, 3, 3), 3),
        (spec("relu_deep_nobias", 2, 2, 2, 2), 4),
    ])
    def test_law_count(self, s, laws):
        phi, rep = run(s)
        assert rep.stop_reason == STAGNATED
        assert rep.num_laws == laws
        assert rep.final_dim == phi.D - laws

    def test_dims_history(self):
        _, rep = run(spec("linear", 2, 2, 2))
        assert rep.dims_per_iteration == [[4] * 3, [5] * 3, [5] * 3]
        assert rep.frobenius_at_step0 is False
        assert rep.stagnation_step == 1

    def test_frobenius_relu(self):
        _, rep = run(spec("relu2_nobias", 2, 2, 2))
        assert rep.frobenius_at_step0 is True
        assert rep.stagnation_step == 0


class TestStopReasons:
    def test_max_iter(self):
        _, rep = run(spec("linear", 2, 2, 2), max_iter=1)
        assert rep.stop_reason == MAX_ITER
        assert rep.num_laws is None

    def test_degree_cap(self):
        _, rep = run(spec("linear", 1, 1, 1, 2), degree_cap=2)
        assert rep.stop_reason == DEGREE_CAP
        assert "bracket" in rep.message

    def test_dim_disagreement(self):
        # the trace of t1 d/dt1 drops at t1 = 0
        _, rep = run(custom(1, "t1^2"), points=[[1], [0]])
        assert rep.stop_reason == DIM_DISAGREEMENT
        assert rep.num_laws is None

    def test_arguments(self):
        phi = build_phi(spec("linear", 1, 1))
        with pytest.raises(ValueError):
            closure(phi, [[1, 1]], max_iter=0)
        with pytest.raises(ValueError):
            closure(phi, [])


class TestDegenerate:
    def test_constant_phi(self):
        _, rep = run(custom(3, "5"), points=[[1, 2, 3]])
        assert rep.num_laws == 3

    def test_identity_phi(self):
        _, rep = run(custom(2, "t1", "t2"), points=[[1, 2]])
        assert rep.num_laws == 0

    def test_report_serializable(self):
        import json
        _, rep = run(spec("linear", 1, 1, 1))
        json.dumps(rep.to_dict())


class TestFrobenius:
    def test_matches_closure(self):
        for s in (spec("linear", 2, 2, 2), spec("relu2_nobias", 2, 2, 2)):
            phi = build_phi(s)
            pts = [p.coords for p in sample_points(s, 2)]
            assert check_frobenius(build_W0(phi), pts) == closure(phi, pts).frobenius_at_step0
