import json

import numpy as np
import pytest

from sdstab.errors import DomainError, FormatError, ValidationError
from sdstab.models import (
    GeneralSiDE,
    LinearSampledModel,
    NonlinearPlanarModel,
    SamplingSchedule,
    assumption_check,
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
    schedule_instants,
    to_cps_form,
)


class TestLoadModel:
    def test_reported_plant(self, fixtures):
        m = load_model(fixtures / "ex1_sub1.json")
        assert isinstance(m, LinearSampledModel)
        assert m.n == 2 and m.m == 1
        assert np.array_equal(m.A, [[1.0, -1.0], [1.0, -5.0]])
        assert np.array_equal(m.B_bar, np.diag([-10.0, 0.0]))

    def test_dimension_mismatch(self):
        doc = {"name": "bad", "n": 2, "A": [[1, 0], [0, 1]],
               "diffusion": [[[1, 0, 0], [0, 1, 0], [0, 0, 1]]], "B_bar": [[0, 0], [0, 0]]}
        with pytest.raises(ValidationError):
            model_from_dict(doc)

    def test_design_mode(self, fixtures):
        m = load_model(fixtures / "ex1_sub1_control.json")
        assert m.design_mode
        assert m.B_bar is None
        assert np.array_equal(m.B_hat, [[1.0], [0.0]])

    def test_unknown_keys_rejected(self):
        with pytest.raises(FormatError):
            model_from_dict({"name": "x", "n": 1, "A": [[0]], "diffusion": [], "B_bar": [[0]],
                             "extra_key": 1})

    def test_both_feedback_forms_rejected(self):
        with pytest.raises(ValidationError):
            model_from_dict({"n": 1, "A": [[0]], "diffusion": [], "B_bar": [[0]], "B_hat": [[1]]})

    def test_parse_failure(self, tmp_path):
        p = tmp_path / "broken.json"
        p.write_text("{not json")
        with pytest.raises(FormatError):
            load_model(p)

    def test_planar(self, fixtures):
        m = load_model(fixtures / "planar.json")
        assert isinstance(m, NonlinearPlanarModel)
        assert m.design_mode
        g = m.with_gain(np.array([[-27.5776, -8.2817]]))
        assert np.allclose(g.B_bar, [[0, 0], [-27.5776, -8.2817]])

    def test_round_trip_bit_exact(self, fixtures, tmp_path):
        for name in ("ex1_sub1", "ex1_sub2", "ex1_sub1_control", "planar"):
            m = load_model(fixtures / f"{name}.json")
            out = tmp_path / f"{name}.json"
            save_model(m, out)
            m2 = load_model(out)
            assert model_to_dict(m) == model_to_dict(m2)
            if isinstance(m, LinearSampledModel):
                assert np.array_equal(m.A, m2.A)
                for g1, g2 in zip(m.diffusion, m2.diffusion):
                    assert np.array_equal(g1, g2)


class TestCpsForm:
    def test_jump_resets_to_zero(self, fixtures):
        cps = to_cps_form(load_model(fixtures / "ex1_sub1.json"))
        v = np.array([0.3, -0.7])
        assert np.array_equal(v + cps.jump(v), np.zeros(2))

    def test_drift_at_equal_states_is_closed_loop(self, fixtures):
        m = load_model(fixtures / "ex1_sub1.json")
        cps = to_cps_form(m)
        x = np.array([1.3, -0.2])
        assert np.array_equal(cps.physical_drift(x, x), m.drift(x))

    def test_drift_hand_value(self, fixtures):
        # (A + B_bar) x at x = (1, 0): A+B = [[-9,-1],[1,-5]] -> (-9, 1)
        cps = to_cps_form(load_model(fixtures / "ex1_sub1.json"))
        d = cps.physical_drift(np.array([1.0, 0.0]), np.zeros(2))
        assert np.array_equal(d, np.array([-9.0, 1.0]))

    def test_unresolved_gain_rejected(self, fixtures):
        with pytest.raises(ValidationError):
            to_cps_form(load_model(fixtures / "ex1_sub1_control.json"))


class TestScheduleInstants:
    def test_periodic_count(self):
        t = schedule_instants(SamplingSchedule.periodic(0.0234), 1.0)
        assert len(t) == 43
        assert np.allclose(t, 0.0234 * np.arange(43), atol=0)
        assert t[-1] <= 1.0

    def test_uniform_deterministic(self):
        sched = SamplingSchedule.uniform_random(0.01, 0.02)
        r1 = schedule_instants(sched, 1.0, rng=np.random.default_rng(5))
        r2 = schedule_instants(sched, 1.0, rng=np.random.default_rng(5))
        assert np.array_equal(r1, r2)
        gaps = np.diff(r1)
        assert gaps.min() >= 0.01 - 1e-12 and gaps.max() <= 0.02 + 1e-12

    def test_explicit_not_increasing(self):
        with pytest.raises(ValidationError):
            SamplingSchedule.explicit([0.1, 0.05])

    def test_explicit_gap_bounds(self):
        s = SamplingSchedule.explicit([0.0, 0.1, 0.25, 0.3])
        assert s.underline_dt == pytest.approx(0.05)
        assert s.overline_dt == pytest.approx(0.15)

    def test_bad_horizon(self):
        with pytest.raises(DomainError):
            schedule_instants(SamplingSchedule.periodic(0.1), 0.0)

    def test_parse(self):
        assert SamplingSchedule.parse("periodic:0.02").dt == 0.02
        s = SamplingSchedule.parse("uniform:0.01,0.03")
        assert (s.dt_lo, s.dt_hi) == (0.01, 0.03)
        with pytest.raises(ValidationError):
            SamplingSchedule.parse("weird:1")


def _zero(n):
    return lambda x, y, t: np.zeros(n)


class TestAssumptionCheck:
    def test_linear_growth_within_bound(self, fixtures):
        m = load_model(fixtures / "ex1_sub1.json")
        side = to_cps_form(m).as_side()
        # |f(x,y)| = |(A+B)x - B y| <= (|A+B| + |B|)(|x| v |y|), Frobenius norms
        bound = (np.linalg.norm(m.A + m.B_bar) + np.linalg.norm(m.B_bar)) ** 2
        rep = assumption_check(side, sample_box=5.0, grid=12, growth_bound=bound)
        assert rep.heuristic
        assert rep.ok
        assert rep.growth_ratio <= bound

    def test_superlinear_flagged(self):
        side = GeneralSiDE(
            n=1, q=1, m=0,
            f=lambda x, y, t: x * x,
            g=_zero(1), f_tilde=_zero(1), g_tilde=_zero(1),
            h_f=lambda seg, k: np.zeros(1),
        )
        rep = assumption_check(side, sample_box=10.0, grid=10, growth_bound=1.0)
        assert not rep.ok
        assert any("growth" in v for v in rep.violations)

    def test_planar_envelope_ratio(self, fixtures):
        m = load_model(fixtures / "planar.json").with_gain(np.array([[-27.5776, -8.2817]]))
        e1 = m.envelope
        # |phi(x)|^2 <= lam_max(Q) |E1|^2 |x|^2 with Q = I
        cap = np.linalg.norm(e1) ** 2
        rng = np.random.default_rng(3)
        xs = rng.uniform(-10, 10, size=(500, 2))
        phi = m.phi(xs)
        ratio = np.max(np.sum(phi**2, axis=1) / np.sum(xs**2, axis=1))
        assert ratio <= cap + 1e-12


class TestGeneralSiDE:
    def test_origin_check(self):
        with pytest.raises(ValidationError):
            GeneralSiDE(
                n=1, q=1, m=0,
                f=lambda x, y, t: x + 1.0,
                g=_zero(1), f_tilde=_zero(1), g_tilde=_zero(1),
                h_f=lambda seg, k: np.zeros(1),
            )
