import numpy as np
import pytest

from ahflow.errors import InadmissibleSpec, MinimalSphereViolation
from ahflow.geometry import CurvatureProfile, RadialGrid, f_from_lambda, sup_r2_lambda
from ahflow.initial_data import (
    InitialDataSpec,
    build_profile,
    classify_regime,
    evaluate_family,
    load_table,
    validate,
)
from ahflow.verification import random_admissible_profile


class TestSpecValidation:
    def test_unknown_family(self):
        with pytest.raises(InadmissibleSpec):
            InitialDataSpec("mystery")

    def test_nonpositive_width(self):
        with pytest.raises(InadmissibleSpec):
            InitialDataSpec("gaussian_bump", width=-1.0)

    def test_negative_center(self):
        with pytest.raises(InadmissibleSpec):
            InitialDataSpec("gaussian_bump", center=-2.0)

    def test_low_dimension(self):
        with pytest.raises(InadmissibleSpec):
            InitialDataSpec("hyperbolic", dimension=2)

    def test_table_required(self):
        with pytest.raises(InadmissibleSpec):
            InitialDataSpec("custom_table")


class TestFamilies:
    def test_hyperbolic(self, grid256):
        p = build_profile(InitialDataSpec("hyperbolic"), grid256)
        assert np.array_equal(p.lam, np.full(256, -1.0))

    def test_gaussian_centered_negative(self, grid256):
        spec = InitialDataSpec("gaussian_bump", amplitude=-0.5, center=0.0, width=1.0)
        p = build_profile(spec, grid256)
        assert p.lam[0] == pytest.approx(-1.5, abs=1e-14)
        assert np.all(p.lam <= -1.0 + 1e-15)
        r = grid256.r_nodes
        assert np.allclose(p.lam, -1 - 0.5 * np.exp(-(r**2)), atol=1e-12)

    def test_gaussian_peak_amplitude_off_center(self):
        # peak value of lam - (-1) equals the amplitude at the bump center
        spec = InitialDataSpec("gaussian_bump", amplitude=1.2, center=2.0, width=0.3)
        r = np.array([2.0])
        assert evaluate_family(spec, r)[0] == pytest.approx(-1.0 + 1.2, rel=1e-12)

    def test_gaussian_sign_indefinite_admissibility(self):
        # A = 1.2 bump at r0 = 2: sign-indefinite; admissible iff the grid
        # scan sup r^2 lam stays below 1 (exhaustive-scan oracle).
        grid = RadialGrid(1024)
        spec = InitialDataSpec("gaussian_bump", amplitude=1.2, center=2.0, width=0.3)
        p = build_profile(spec, grid)
        scan = np.max(grid.r_squared[1:] * p.lam[1:])
        assert scan < 1.0
        assert np.max(p.lam) > 0.0
        assert validate(p).regime == "sign_indefinite"
        assert sup_r2_lambda(p) == pytest.approx(scan, rel=0, abs=0)

    def test_gaussian_even_parity(self, grid256):
        spec = InitialDataSpec("gaussian_bump", amplitude=0.7, center=1.5, width=0.5)
        r = np.linspace(0, 3, 301)
        lam_pos = evaluate_family(spec, r)
        lam_neg = evaluate_family(spec, -r)
        assert np.allclose(lam_pos, lam_neg, rtol=0, atol=1e-15)

    def test_polynomial_tail(self):
        spec = InitialDataSpec("polynomial_bump", amplitude=0.3, width=1.0)
        r = np.array([0.0, 10.0, 100.0])
        lam = evaluate_family(spec, r)
        assert lam[0] == pytest.approx(-0.7, rel=1e-14)
        # O(1/r^4) tail
        assert (lam[1] + 1) / (lam[2] + 1) == pytest.approx(1e4, rel=0.05)

    def test_build_rejects_minimal_sphere(self, grid256):
        spec = InitialDataSpec("gaussian_bump", amplitude=3.0, center=2.0, width=0.5)
        with pytest.raises(InadmissibleSpec):
            build_profile(spec, grid256)


class TestCustomTable:
    def make_table(self, tmp_path, rows):
        path = tmp_path / "table.csv"
        path.write_text("\n".join(f"{r},{v}" for r, v in rows) + "\n")
        return path

    def test_roundtrip(self, tmp_path, grid256):
        r_tab = np.linspace(0.0, 12.0, 241)
        lam_tab = -1 - 0.5 * np.exp(-(r_tab**2))
        path = self.make_table(tmp_path, zip(r_tab, lam_tab))
        table = load_table(path)
        spec = InitialDataSpec("custom_table", table=table)
        p = build_profile(spec, grid256)
        inside = grid256.r_nodes <= 12.0
        exact = -1 - 0.5 * np.exp(-(grid256.r_nodes[inside] ** 2))
        assert np.max(np.abs(p.lam[inside] - exact)) < 2e-4
        # beyond the table the profile relaxes to -1
        assert abs(p.lam[-1] + 1.0) < 1e-6

    def test_must_start_at_zero(self, tmp_path):
        path = self.make_table(tmp_path, [(0.5, -1), (1.0, -1), (2.0, -1), (3.0, -1)])
        with pytest.raises(InadmissibleSpec):
            load_table(path)

    def test_strictly_increasing(self, tmp_path):
        path = self.make_table(tmp_path, [(0, -1), (1, -1), (1, -1), (2, -1)])
        with pytest.raises(InadmissibleSpec):
            load_table(path)

    def test_too_few_rows(self, tmp_path):
        path = self.make_table(tmp_path, [(0, -1), (1, -1)])
        with pytest.raises(InadmissibleSpec):
            load_table(path)


class TestValidate:
    def test_hyperbolic_report(self, grid256):
        p = build_profile(InitialDataSpec("hyperbolic"), grid256)
        rep = validate(p)
        assert rep.admissible
        assert rep.regime == "strictly_below_minus_one"
        assert rep.parity_defect <= 1e-14
        assert rep.tail_defect <= 1e-14
        assert rep.sup_r2_lambda < 0.0

    def test_constructed_violation(self, grid256):
        p = CurvatureProfile(grid256, np.full(256, 2.0), 3)
        rep = validate(p)
        assert not rep.admissible
        assert rep.sup_r2_lambda >= 2.0
        assert rep.regime == "sign_indefinite"

    def test_touching_zero_regime(self, grid256):
        spec = InitialDataSpec("gaussian_bump", amplitude=1.0, center=0.0, width=1.0)
        p = build_profile(spec, grid256)
        assert abs(np.max(p.lam)) <= 1e-12
        assert validate(p).regime == "nonpositive"

    def test_strictly_negative_regime(self, profile_neg):
        assert validate(profile_neg).regime == "strictly_negative"

    def test_classification_tolerance(self):
        lam = np.array([-1.0, -0.5, -5e-13])
        assert classify_regime(lam) == "nonpositive"
        lam = np.array([-1.0, -0.5, -1e-6])
        assert classify_regime(lam) == "strictly_negative"
        lam = np.array([-1.0, -0.5, 1e-6])
        assert classify_regime(lam) == "sign_indefinite"

    def test_regime_stable_under_refinement(self):
        specs = [
            InitialDataSpec("hyperbolic"),
            InitialDataSpec("gaussian_bump", amplitude=-0.5, width=1.0),
            InitialDataSpec("gaussian_bump", amplitude=0.5, width=1.0),
            InitialDataSpec("gaussian_bump", amplitude=1.2, center=2.0, width=0.3),
        ]
        for spec in specs:
            labels = set()
            for size in (128, 256):
                p = build_profile(spec, RadialGrid(size))
                labels.add(validate(p).regime)
            assert len(labels) == 1, f"{spec.family}: {labels}"

    def test_admissible_equivalent_to_f_defined(self, grid256, rng):
        # sup r^2 lam < 1 (validator) <=> f_from_lambda succeeds
        for _ in range(20):
            p = random_admissible_profile(grid256, rng)
            rep = validate(p)
            assert rep.sup_r2_lambda < 1.0
            f_from_lambda(p)  # must not raise
        bad = CurvatureProfile(grid256, np.full(256, 2.0), 3)
        assert validate(bad).sup_r2_lambda >= 1.0
        with pytest.raises(MinimalSphereViolation):
            f_from_lambda(bad)
