import numpy as np
import pytest

from conslaw.lawfinder import verify_law
from conslaw.models import (
    CertificateError,
    ModelSpec,
    build_phi,
    certify,
    known_laws,
    layout,
    sample_generic_point,
    sample_points,
)
from conslaw.poly import render

from .conftest import phi_of, spec


def numeric_phi(phi, point):
    return np.array([float(p.eval(list(point))) for p in phi.phi])


class TestModelSpec:
    @pytest.mark.parametrize("kwargs", [
        dict(kind="nope", widths=(1, 1)),
        dict(kind="linear", widths=(2,)),
        dict(kind="linear", widths=(2, 0)),
        dict(kind="relu2_nobias", widths=(2, 2, 2, 2)),
        dict(kind="relu_deep_nobias", widths=(2, 2)),
        dict(kind="custom", phi=("t1",)),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ModelSpec(**kwargs)

    def test_round_trip(self):
        for s in (spec("linear", 2, 3, 4), spec("relu2_bias", 1, 2, 3),
                  ModelSpec("custom", phi=("t1*t2",), dim=2)):
            assert ModelSpec.from_dict(s.to_dict()) == s

    def test_key(self):
        assert spec("linear", 2, 2, 2).key() == "linear[2,2,2]"


class TestLayout:
    def test_linear_blocks(self):
        blocks = layout(spec("linear", 2, 3, 4))
        assert [(b.name, b.shape, b.offset) for b in blocks] == [
            ("U1", (2, 3), 0), ("U2", (3, 4), 6)]

    def test_bias_blocks_follow_layers(self):
        names = [b.name for b in layout(spec("relu2_bias", 2, 3, 1))]
        assert names == ["U1", "b1", "U2", "b2"]

    def test_row_major_index(self):
        b = layout(spec("linear", 2, 3, 1))[0]
        assert b.index(1, 2) == 5


class TestBuildPhi:
    def test_matrix_factorization_scalar(self):
        phi = phi_of("linear", 1, 1, 1)
        assert [render(p) for p in phi.phi] == ["t1*t2"]

    def test_linear_matches_matrix_product(self, rng):
        s = spec("linear", 2, 3, 2, 2)
        phi = build_phi(s)
        theta = rng.integers(-5, 6, size=phi.D)
        mats, off = [], 0
        for b in layout(s):
            mats.append(theta[off:off + b.size].reshape(b.shape))
            off += b.size
        expected = (mats[0] @ mats[1] @ mats[2]).ravel()
        assert np.array_equal(numeric_phi(phi, theta.tolist()), expected)

    def test_relu2_ordering(self):
        # phi indexed by (j, k, i): u_jk * v_ij
        phi = phi_of("relu2_nobias", 2, 1, 2)
        assert [render(p) for p in phi.phi] == ["t1*t3", "t2*t3", "t1*t4", "t2*t4"]

    def test_relu2_bias_tail(self):
        phi = phi_of("relu2_bias", 1, 1, 1)
        # theta = (U1, b1, U2, b2)
        assert [render(p) for p in phi.phi] == ["t1*t3", "t2*t3", "t4"]

    def test_deep_relu_paths(self):
        phi = phi_of("relu_deep_nobias", 1, 2, 1, 1)
        assert phi.d == 2
        assert all(p.degree() == 3 for p in phi.phi)

    def test_custom(self):
        phi = build_phi(ModelSpec("custom", phi=("t1^2", "t1*t2"), dim=2))
        assert phi.D == 2 and phi.d == 2


class TestGenericPoints:
    def test_deterministic(self):
        s = spec("relu2_bias", 2, 3, 2)
        assert sample_generic_point(s, seed=7) == sample_generic_point(s, seed=7)
        pts = sample_points(s, 3, seed=7)
        assert pts == sample_points(s, 3, seed=7)
        assert len({p.coords for p in pts}) == 3

    def test_nonzero_in_range(self):
        p = sample_generic_point(spec("linear", 3, 3, 3), seed=1, bound=4)
        assert all(1 <= abs(c) <= 4 for c in p.coords)

    def test_certificates_detect_degeneracy(self):
        s = spec("relu2_nobias", 2, 2, 1)
        # second neuron has zero outgoing weight
        pt = certify(s, (1, 2, 3, 4, 5, 0))
        assert pt.nonzero_neurons is False
        assert not pt.certified()
        # proportional incoming vectors
        pt = certify(s, (1, 2, 2, 4, 1, 1))
        assert pt.distinct_hyperplanes is False

    def test_full_rank_stack(self):
        s = spec("linear", 1, 2, 1)
        assert certify(s, (1, 1, 1, 1)).full_rank_stack is False
        assert certify(s, (1, 2, 3, 4)).full_rank_stack is True

    def test_hyperplane_not_applicable(self):
        assert certify(spec("relu2_nobias", 1, 2, 1), (1, 2, 3, 4)).distinct_hyperplanes is None

    def test_bound_validation(self):
        with pytest.raises(ValueError):
            sample_generic_point(spec("linear", 1, 1), bound=1)

    def test_certificate_error_type(self):
        assert issubclass(CertificateError, RuntimeError)


class TestKnownLaws:
    @pytest.mark.parametrize("s", [
        spec("linear", 1, 1, 1), spec("linear", 2, 3, 2), spec("linear", 2, 2, 2, 2),
        spec("relu2_nobias", 3, 2, 2), spec("relu2_bias", 2, 2, 2),
        spec("relu_deep_nobias", 2, 2, 2, 2),
    ])
    def test_all_conserved(self, s):
        phi = build_phi(s)
        for h in known_laws(s, phi):
            assert verify_law(h, phi)

    def test_counts(self):
        assert len(known_laws(spec("linear", 2, 3, 2))) == 6
        assert len(known_laws(spec("relu2_nobias", 2, 3, 2))) == 3

    def test_scalar_balancedness(self):
        assert [render(h) for h in known_laws(spec("linear", 1, 1, 1))] == ["t1^2 - t2^2"]

    def test_bias_enters_incoming_side(self):
        assert [render(h) for h in known_laws(spec("relu2_bias", 1, 1, 1))] == ["t1^2 + t2^2 - t3^2"]

    def test_custom_rejected(self):
        with pytest.raises(ValueError):
            known_laws(ModelSpec("custom", phi=("t1",), dim=1))
