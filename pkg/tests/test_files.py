import json
from pathlib import Path

import numpy as np
import pytest

import liftplan as lp
from conftest import random_policy, random_system
from liftplan.errors import ConfigError
from liftplan.files import scenario_from_dict
from liftplan.jsonio import dump_json, format_float

REPO = Path(__file__).resolve().parent.parent


class TestScenarioParsing:
    def test_shipped_scenarios_parse(self):
        for name in ("circle.json", "funnel.json", "terminal_qcc.json"):
            cfg = lp.load_scenario(REPO / "scenarios" / name)
            sys, cost, cons = lp.build_scenario(cfg)
            assert sys.N == cfg.N

    def test_shipped_sweep_files_match_published_grids(self):
        data = json.loads((REPO / "scenarios" / "table_circle.json").read_text())
        cells = [scenario_from_dict(c) for c in data["cells"]]
        assert [(c.sigma1, c.r_wp) for c in cells] == [
            (0.010, 0.80), (0.060, 0.70), (0.060, 0.50), (0.070, 0.50),
            (0.070, 0.70), (0.850, 0.50), (0.850, 0.70)]
        data = json.loads((REPO / "scenarios" / "table_funnel.json").read_text())
        cells = [scenario_from_dict(c) for c in data["cells"]]
        assert [(c.sigma1, c.h_entry, c.h_exit) for c in cells] == [
            (0.010, 0.40, 0.20), (0.056, 0.40, 0.20), (0.056, 0.50, 0.30),
            (0.060, 0.40, 0.20), (0.060, 0.50, 0.30), (0.500, 0.40, 0.20),
            (0.550, 0.50, 0.30)]
        data = json.loads((REPO / "scenarios" / "table_qcc.json").read_text())
        cells = [scenario_from_dict(c) for c in data["cells"]]
        assert len(cells) == 12
        assert {c.qcc_mode for c in cells} == {"markov", "lmi", "quadratic"}

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError, match="turbo"):
            scenario_from_dict({"geometry": {"kind": "circle"}, "turbo": {}})

    def test_unknown_field_rejected_with_name(self):
        with pytest.raises(ConfigError, match="wobble"):
            scenario_from_dict({"geometry": {"kind": "circle", "wobble": 3}})

    def test_missing_kind(self):
        with pytest.raises(ConfigError, match="kind"):
            scenario_from_dict({"model": {"N": 5}})

    def test_cost_overrides_threaded_through(self):
        cfg = scenario_from_dict({
            "geometry": {"kind": "funnel"},
            "cost": {"stage_diag": [0, 2, 0.2, 0.02], "stage_scale": 0.1,
                     "wp_weight": 7.0, "goal_pos": [1.5, 0.2]},
        })
        sys, cost, cons = lp.build_scenario(cfg)
        assert cost.Q[0][2, 2] == pytest.approx(0.1 * 2.0)
        assert cost.x_star[0] == pytest.approx(1.5)
        assert cost.waypoints[0].weight[0, 0] == pytest.approx(7.0)


class TestTrajectoryRoundTrip:
    def test_dict_round_trip(self, rng):
        sys = random_system(rng, n_x=2, n_u=1, n_w=1, N=4)
        mu_u, V_u = random_policy(rng, sys)
        traj = lp.propagate_trajectory(sys, mu_u, V_u)
        data = json.loads(dump_json(lp.trajectory_to_dict(traj)))
        back = lp.trajectory_from_dict(data)
        for k in range(sys.N + 1):
            assert np.array_equal(back.mu_x[k], traj.mu_x[k])
            assert np.array_equal(back.V_x[k], traj.V_x[k])

    def test_mc_report_serialises(self, rng):
        sys = random_system(rng, n_x=2, n_u=1, n_w=1, N=3)
        mu_u, V_u = random_policy(rng, sys)
        traj = lp.propagate_trajectory(sys, mu_u, V_u)
        cons = [lp.state_lcc(sys, 1, [1.0, 0.0], 5.0, 0.1)]
        cost = lp.CostSpec.create(sys, Q=np.eye(2), R=np.eye(1), Q_N=np.eye(2))
        rep = lp.rollout(sys, traj, cons, cost, seed=0, count=2000)
        text = dump_json(rep.to_dict())
        parsed = json.loads(text)
        assert parsed["samples"] == 2000
        assert parsed["constraints"][0]["rate"] == rep.checks[0].rate


class TestFloatFormatting:
    def test_seventeen_digits_round_trip(self, rng):
        for _ in range(200):
            x = float(rng.normal() * 10.0 ** float(rng.integers(-8, 8)))
            assert float(format_float(x)) == x

    def test_json_deterministic(self):
        payload = {"a": 1 / 3, "b": [1e-17, 2.5], "c": {"d": True, "e": None}}
        assert dump_json(payload) == dump_json(payload)
