import numpy as np
import pytest

from swda.calibration import CalibrationSolution, build_training_dataset
from swda.dsb import TrainConfig, make_schedule, new_model
from swda.dynamics import PhysParams, State
from swda.grid import Grid
from swda.noise_dictionary import (
    NoiseDictionary,
    build_dictionary,
    dictionary_from_fields,
    draw,
    draw_index,
    psi_for_index,
    state_increment,
)


@pytest.fixture
def grid():
    return Grid(16, 16)


def random_fields(grid, n, seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, *grid.shape))


class TestConstruction:
    def test_clipping_bounds(self, grid):
        fields = random_fields(grid, 20)
        d = dictionary_from_fields(fields, grid, scale=30.0)
        assert d.n_samples == 20
        lo = d.local_mean - d.local_std
        hi = d.local_mean + d.local_std
        assert np.all(d.samples >= lo - 1e-15)
        assert np.all(d.samples <= hi + 1e-15)

    def test_stats_computed_before_clipping(self, grid):
        fields = random_fields(grid, 50, seed=1)
        d = dictionary_from_fields(fields, grid, scale=1.0)
        assert np.allclose(d.local_mean, fields.mean(axis=0))
        assert np.allclose(d.local_std, fields.std(axis=0))

    def test_values_within_band_unchanged(self, grid):
        fields = random_fields(grid, 10, seed=2)
        d = dictionary_from_fields(fields, grid, scale=1.0)
        inside = np.abs(fields - d.local_mean) <= d.local_std
        assert np.array_equal(d.samples[inside], fields[inside])

    def test_needs_two_samples(self, grid):
        with pytest.raises(ValueError):
            dictionary_from_fields(random_fields(grid, 1), grid, scale=1.0)

    def test_shape_validated(self, grid):
        with pytest.raises(ValueError):
            NoiseDictionary(
                samples=np.zeros((3, 8, 8)),
                local_mean=np.zeros((8, 8)),
                local_std=np.zeros((8, 8)),
                scale=1.0,
                grid=grid,
            )


class TestDraw:
    def test_scale_applied_at_draw(self, grid):
        fields = random_fields(grid, 5, seed=3)
        d = dictionary_from_fields(fields, grid, scale=30.0)
        rng = np.random.default_rng(0)
        psi = draw(d, rng)
        matches = [np.array_equal(psi, s * 30.0) for s in d.samples]
        assert any(matches)

    def test_index_draw_consistency(self, grid):
        fields = random_fields(grid, 5, seed=4)
        d = dictionary_from_fields(fields, grid, scale=2.0)
        idx = draw_index(d, np.random.default_rng(1))
        assert 0 <= idx < 5
        assert np.array_equal(psi_for_index(d, idx), d.samples[idx] * 2.0)

    def test_uniform_coverage(self, grid):
        fields = random_fields(grid, 4, seed=5)
        d = dictionary_from_fields(fields, grid, scale=1.0)
        rng = np.random.default_rng(2)
        counts = np.bincount([draw_index(d, rng) for _ in range(4000)], minlength=4)
        assert counts.min() > 800


class TestBuildFromModel:
    def test_generated_dictionary(self, grid):
        rng = np.random.default_rng(6)
        sols = []
        for _ in range(6):
            psi = rng.standard_normal(grid.shape)
            sols.append(CalibrationSolution(psi=psi - psi.mean(), residual=0.0,
                                            iterations=0, converged=True))
        dataset = build_training_dataset(sols, grid)
        cfg = TrainConfig(hidden_width=16, emb_dim=8)
        model = new_model(grid.npoints, make_schedule(6, 1e-3, 1e-2), 0.5, 0.25, cfg)
        d = build_dictionary(model, dataset, n=8, scale=30.0, rng=np.random.default_rng(7))
        assert d.n_samples == 8
        assert d.scale == 30.0
        assert d.samples.shape == (8, *grid.shape)
        assert np.all(np.isfinite(d.samples))


class TestStateIncrement:
    def test_zero_psi_gives_zero(self, grid):
        rng = np.random.default_rng(8)
        s = State(rng.standard_normal(grid.shape), rng.standard_normal(grid.shape),
                  1.0 + 0.1 * rng.standard_normal(grid.shape), grid)
        du, dv, deta = state_increment(s, np.zeros(grid.shape), PhysParams())
        assert np.allclose(du, 0.0, atol=1e-13)
        assert np.allclose(dv, 0.0, atol=1e-13)
        assert np.allclose(deta, 0.0, atol=1e-13)

    def test_rest_state_coriolis_only(self, grid):
        # with u = v = 0 and flat eta only the rotation term survives:
        # du = (f/Ro) zv, dv = -(f/Ro) zu
        x, y = grid.coords()
        psi = np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y)
        s = State(np.zeros(grid.shape), np.zeros(grid.shape), np.ones(grid.shape), grid)
        p = PhysParams(f_cor=1.0, ro=0.2)
        du, dv, deta = state_increment(s, psi, p)
        from swda.grid import grad_perp

        zu, zv = grad_perp(psi, grid)
        assert np.allclose(du, (p.f_cor / p.ro) * zv, atol=1e-10)
        assert np.allclose(dv, -(p.f_cor / p.ro) * zu, atol=1e-10)
        assert np.allclose(deta, 0.0, atol=1e-12)

    def test_height_row_is_advection_of_eta(self, grid):
        x, y = grid.coords()
        psi = np.sin(2 * np.pi * y)
        eta = 1.0 + 0.1 * np.sin(2 * np.pi * x)
        s = State(np.zeros(grid.shape), np.zeros(grid.shape), eta, grid)
        _, _, deta = state_increment(s, psi, PhysParams())
        # zeta = (-2*pi*cos(2*pi*y), 0); deta = -eta_x * zeta_u
        expected = -0.2 * np.pi * np.cos(2 * np.pi * x) * (-2 * np.pi * np.cos(2 * np.pi * y))
        assert np.allclose(deta, expected, atol=1e-9)
