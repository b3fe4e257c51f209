import math

import numpy as np
import pytest

from fuzzy_euler.diagnostics import (
    COLUMNS,
    DegenerateDataError,
    DiagnosticsRow,
    RunningIntegrals,
    assemble_row,
    estimate_constant,
    recompute_rows,
    tail_fraction,
    write_csv,
)
from fuzzy_euler.hydro import SimState, SolverConfig, run
from fuzzy_euler.initial_data import InitialData
from fuzzy_euler.kernels import KernelFamily
from fuzzy_euler.spectral import zeros


def synthetic_rows(X, H_integral):
    rows = []
    for i, (x, h) in enumerate(zip(X, H_integral)):
        vals = dict.fromkeys(COLUMNS, 0.0)
        vals.update(t=float(i), X_sigma=x, H_integral=h)
        rows.append(DiagnosticsRow(**vals))
    return rows


@pytest.fixture
def small_run(wide_grid):
    s0 = InitialData("gaussian", amplitude=1e-2, width=2.0, velocity_amplitude=1e-2).build(wide_grid)
    cfg = SolverConfig(kernel=KernelFamily(epsilon=0.5, m=2.0, nu0=0.5), dt=0.02, t_end=4.0, snapshot_stride=10)
    return s0, cfg, run(s0, cfg)


class TestRow:
    def test_zero_state(self, grid1d):
        cfg = SolverConfig(kernel=KernelFamily.default(1, 0.2))
        row = assemble_row(SimState(zeros(grid1d), zeros(grid1d)), cfg, RunningIntegrals())
        assert row.mass == pytest.approx(grid1d.volume)
        assert row.min_rho == pytest.approx(1.0)
        skip = {"t", "mass", "min_rho"}
        assert all(getattr(row, c) == 0.0 for c in COLUMNS if c not in skip)

    def test_norms_nonnegative_and_integrals_monotone(self, small_run):
        _, _, ts = small_run
        norms = ("X_sigma", "H_sigma", "X_half", "H_half", "a_low", "a_high", "w_norm", "grad_u_inf")
        for r in ts.rows:
            assert all(getattr(r, c) >= 0 for c in norms)
        for c in ("H_integral", "w_integral", "grad_u_integral"):
            v = np.array([getattr(r, c) for r in ts.rows])
            assert np.all(np.diff(v) >= 0)

    def test_stateless_recompute(self, small_run):
        _, cfg, ts = small_run
        again = recompute_rows(ts.states, cfg)
        assert again == ts.rows

    def test_low_high_split(self, small_run):
        _, _, ts = small_run
        r = ts.rows[0]
        assert r.a_low > 0 and r.a_high > 0

    def test_csv_layout(self, small_run, tmp_path):
        _, _, ts = small_run
        p = tmp_path / "diagnostics.csv"
        write_csv(p, ts.rows)
        lines = p.read_text().splitlines()
        assert lines[0].split(",") == list(COLUMNS)
        assert len(lines) == len(ts.rows) + 1
        assert float(lines[1].split(",")[1]) == ts.rows[0].mass


class TestConstant:
    def test_steady_rows_give_one(self):
        rep = estimate_constant(synthetic_rows([2.0] * 5, [0.0] * 5))
        assert rep.C_est == 1.0 and rep.monotone_violations == 0

    def test_growth_is_counted(self):
        rep = estimate_constant(synthetic_rows([1.0, 0.5, 0.8, 0.4, 0.9, 0.3], [0.0] * 6), transient=0.0)
        assert rep.monotone_violations == 2
        assert rep.C_est == 1.0

    def test_integral_enters(self):
        rep = estimate_constant(synthetic_rows([1.0, 0.5, 0.25], [0.0, 0.7, 1.0]))
        assert rep.C_est == pytest.approx(1.25)

    def test_trivial_data(self):
        with pytest.raises(DegenerateDataError):
            estimate_constant(synthetic_rows([0.0, 0.0], [0.0, 0.0]))
        with pytest.raises(ValueError):
            estimate_constant(synthetic_rows([1.0], [0.0]))

    def test_small_data_constant_is_finite(self, small_run):
        rep = estimate_constant(small_run[2].rows)
        assert math.isfinite(rep.C_est) and rep.C_est >= 1.0


class TestTail:
    def test_linear_integral(self):
        t = np.linspace(0, 2, 21)
        assert tail_fraction(t, t, 1.0) == pytest.approx(0.5)

    def test_saturating_integral(self):
        t = np.linspace(0, 40, 401)
        assert tail_fraction(t, 1 - np.exp(-t), 20.0) < 1e-8

    def test_zero_integral(self):
        t = np.linspace(0, 1, 5)
        assert tail_fraction(t, np.zeros(5), 0.5) == 0.0
