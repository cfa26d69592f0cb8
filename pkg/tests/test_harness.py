from __future__ import annotations

import csv
import io
import json

import pytest

from evtrecover.harness import EvaluationReport, aggregate, evaluate, recovery_stats
from evtrecover.library import get_scenario
from evtrecover.plotting import write_figures

from scripted import open_field


def ep(variant, length, reward, attempts=0, successes=0, scenario="s", seed=0):
    return {"variant": variant, "scenario": scenario, "seed": seed, "episode_length": length,
            "episodic_reward": reward, "success": length == 500, "recovery_attempts": attempts,
            "recovery_successes": successes, "fallback_events": 0}


@pytest.fixture(scope="module")
def small_report():
    return evaluate([get_scenario("pillars:dash"), get_scenario("aisles:dash")], n_episodes=3, base_seed=10)


class TestAggregates:
    def test_hand_computed(self):
        agg = aggregate([ep("full", 500, 400), ep("full", 300, 100), ep("full", 500, 250)])
        assert agg["SR"] == pytest.approx(2 / 3)
        assert agg["EL"] == pytest.approx(433.33, abs=0.01)
        assert agg["ER"] == pytest.approx(250)

    def test_all_successful(self):
        assert aggregate([ep("full", 500, 1.0)] * 50)["SR"] == 1.0

    def test_recovery_stats(self):
        st = recovery_stats([ep("full", 500, 1, 3, 2), ep("full", 100, 1, 1, 0)])
        assert st == {"attempts": 4, "successes": 2, "success_rate": 0.5, "fallback_events": 0}
        assert recovery_stats([ep("no_recovery", 80, 1)])["success_rate"] is None


class TestEvaluate:
    def test_shape(self, small_report):
        rep = small_report
        assert rep.variants == ["full", "no_reflection", "no_retrieval", "no_recovery"]
        assert len(rep.episodes) == 4 * 2 * 3
        assert len(rep.results()) == 8
        assert rep.config["seeds"] == [10, 11, 12]

    def test_consistency(self, small_report):
        small_report.check_consistency()
        EvaluationReport.from_dict(json.loads(small_report.to_json())).check_consistency()

    def test_tampered_report_detected(self, small_report):
        d = json.loads(small_report.to_json())
        d["results"][0]["SR"] = 0.123
        with pytest.raises(ValueError):
            EvaluationReport.from_dict(d).check_consistency(d)

    def test_no_recovery_has_no_attempts(self, small_report):
        assert all(e["recovery_attempts"] == 0 for e in small_report.episodes if e["variant"] == "no_recovery")

    def test_seeds_shared_across_variants(self, small_report):
        by_variant = {}
        for e in small_report.episodes:
            by_variant.setdefault(e["variant"], []).append((e["scenario"], e["seed"]))
        assert len({tuple(v) for v in by_variant.values()}) == 1

    def test_deterministic(self, small_report):
        again = evaluate([get_scenario("pillars:dash"), get_scenario("aisles:dash")], n_episodes=3, base_seed=10)
        assert again.to_json() == small_report.to_json()

    def test_memory_reset_between_variants(self):
        made = []

        def factory(variant):
            from evtrecover.memory import CaseMemory
            made.append(variant)
            return CaseMemory()

        evaluate([get_scenario("pillars:dash")], ["full", "no_reflection"], 2, memory_factory=factory)
        assert made == ["full", "no_reflection"]

    @pytest.mark.parametrize("kw", [{"variants": ["turbo"]}, {"n_episodes": 0}])
    def test_bad_arguments(self, kw):
        args = {"variants": ["full"], "n_episodes": 1, **kw}
        with pytest.raises(ValueError):
            evaluate([open_field()], args["variants"], args["n_episodes"])

    def test_duplicate_scenarios(self):
        with pytest.raises(ValueError):
            evaluate([open_field(), open_field()], ["full"], 1)


class TestOutputs:
    def test_table(self, small_report):
        text = small_report.table()
        assert "pillars:dash ER/EL/SR" in text
        assert "Recovery phases" in text and "no_recovery" in text

    def test_csv(self, small_report):
        rows = list(csv.DictReader(io.StringIO(small_report.results_csv())))
        assert len(rows) == 8 and set(rows[0]) == {"variant", "scenario", "episodes", "ER", "EL", "SR"}
        rec = list(csv.DictReader(io.StringIO(small_report.recovery_csv())))
        assert [r["scenario"] for r in rec[:3]] == ["pillars:dash", "aisles:dash", "all"]

    def test_write_and_figures(self, small_report, tmp_path):
        path = tmp_path / "out" / "report.json"
        written = small_report.write(path) + write_figures(small_report, path)
        names = sorted(p.name for p in written)
        assert names == ["report.json", "report_episodes.csv", "report_recovery.csv", "report_recovery.png",
                         "report_results.csv", "report_sr.png"]
        assert all(p.stat().st_size > 0 for p in written)
        assert EvaluationReport.load(path).to_json() == small_report.to_json()

    def test_figures_deterministic(self, small_report, tmp_path):
        a = write_figures(small_report, tmp_path / "a.json")
        b = write_figures(small_report, tmp_path / "b.json")
        assert [p.read_bytes() for p in a] == [p.read_bytes() for p in b]

    def test_schema_version(self, small_report):
        d = small_report.to_dict()
        d["schema_version"] = 9
        with pytest.raises(ValueError):
            EvaluationReport.from_dict(d)
