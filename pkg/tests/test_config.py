import math

import pytest

from fuzzy_euler.config import default_config, dump_config, load_config, parse_config, with_overrides
from fuzzy_euler.errors import ConfigError

MINIMAL = """
[grid]
dimension = 1
points = 64
length = 6.283185307179586
"""


class TestParsing:
    def test_minimal_file_gets_defaults(self):
        cfg = parse_config(MINIMAL)
        assert cfg.grid.points == 64
        assert cfg.kernel.epsilon == 0.1 and cfg.kernel.m == 2.0
        assert cfg.solver.integrator == "etdrk4"
        assert cfg.study["lambda_list"] == [8.0, 16.0, 32.0, 64.0]

    def test_m_defaults_to_dimension_plus_one(self):
        cfg = parse_config("[grid]\ndimension = 2\npoints = 32\n")
        assert cfg.kernel.m == 3.0

    def test_integers_accepted_for_floats(self):
        cfg = parse_config(MINIMAL + "[solver]\nfriction = 2\n")
        assert cfg.solver.friction == 2.0 and isinstance(cfg.solver.friction, float)

    def test_sections_reach_the_objects(self):
        text = MINIMAL + '[kernel]\nepsilon = 0.3\nnu0 = 0.2\n[solver]\npressure = "general"\ngamma = 3.0\n'
        cfg = parse_config(text)
        assert cfg.solver.kernel.epsilon == 0.3 and cfg.kernel.nu0 == 0.2
        assert cfg.solver.pressure.kind == "general" and cfg.solver.pressure.gamma == 3.0

    def test_round_trip(self):
        cfg = parse_config(MINIMAL + '[initial_data]\nkind = "modes"\nmodes = [[1], [3]]\n[diagnostics]\nsigma = [1.5, 2.0]\n')
        again = parse_config(dump_config(cfg))
        assert again.normalized == cfg.normalized

    def test_overrides_are_validated(self):
        cfg = with_overrides(default_config(), "solver", dt=0.5)
        assert cfg.solver.dt == 0.5
        with pytest.raises(ConfigError):
            with_overrides(cfg, "solver", dt=-1.0)

    def test_seed(self):
        assert parse_config(MINIMAL + "[initial_data]\nseed = 7\n").seed == 7


class TestErrors:
    @pytest.mark.parametrize(
        "text, fragment",
        [
            ("[kernel]\nepsilon = 0.1\n", "[grid]"),
            (MINIMAL + "[kernel]\nepsilonn = 0.1\n", "did you mean 'epsilon'"),
            (MINIMAL + "[kernal]\nepsilon = 0.1\n", "did you mean 'kernel'"),
            (MINIMAL + "[kernel]\nnu0 = -1.0\n", "[kernel].nu0 = -1.0 is out of range"),
            (MINIMAL + '[solver]\nintegrator = "euler"\n', "[solver].integrator"),
            (MINIMAL + '[solver]\ndt = "small"\n', "[solver].dt"),
            ("[grid]\npoints = 48\n", "[grid].points"),
            ("[grid\npoints = 48\n", "malformed TOML"),
        ],
    )
    def test_message_names_the_location(self, text, fragment):
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        assert fragment in str(info.value)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "absent.toml")

    def test_load_from_disk(self, tmp_path):
        p = tmp_path / "run.toml"
        p.write_text(MINIMAL)
        assert load_config(p).grid.length == pytest.approx(2 * math.pi)
