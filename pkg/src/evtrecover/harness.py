"""Batch evaluation and ablation reports.

:func:`evaluate` runs every (variant, scenario, seed) combination and
collects the per-episode results in an :class:`EvaluationReport`.  All
aggregates are computed from the embedded per-episode list, so a saved
report can always be re-checked with :meth:`EvaluationReport.check_consistency`.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence

from .episode import MAX_STEPS, VARIANTS, EpisodeResult, run_episode
from .memory import CaseMemory
from .scenario import Scenario

REPORT_SCHEMA_VERSION = 1
DEFAULT_EPISODES = 50


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values) if values else 0.0


def aggregate(episodes: Sequence[dict]) -> dict:
    """Mean reward, mean length and success rate of a list of episode records."""
    n = len(episodes)
    return {
        "episodes": n,
        "ER": _mean([e["episodic_reward"] for e in episodes]),
        "EL": _mean([e["episode_length"] for e in episodes]),
        "SR": (sum(1 for e in episodes if e["success"]) / n) if n else 0.0,
    }


def recovery_stats(episodes: Sequence[dict]) -> dict:
    attempts = sum(e["recovery_attempts"] for e in episodes)
    successes = sum(e["recovery_successes"] for e in episodes)
    return {
        "attempts": attempts,
        "successes": successes,
        "success_rate": successes / attempts if attempts else None,
        "fallback_events": sum(e.get("fallback_events", 0) for e in episodes),
    }


@dataclass
class EvaluationReport:
    config: dict
    episodes: List[dict] = field(default_factory=list)

    # -- derived tables ------------------------------------------------------

    @property
    def scenarios(self) -> List[str]:
        return list(self.config["scenarios"])

    @property
    def variants(self) -> List[str]:
        return list(self.config["variants"])

    def _select(self, variant: str, scenario: Optional[str] = None) -> List[dict]:
        return [e for e in self.episodes
                if e["variant"] == variant and (scenario is None or e["scenario"] == scenario)]

    def results(self) -> List[dict]:
        """One row per (variant, scenario) cell."""
        rows = []
        for v in self.variants:
            for s in self.scenarios:
                rows.append({"variant": v, "scenario": s, **aggregate(self._select(v, s))})
        return rows

    def recovery(self) -> List[dict]:
        """Recovery attempts and success rate per (variant, scenario) cell plus variant totals."""
        rows = []
        for v in self.variants:
            for s in self.scenarios:
                rows.append({"variant": v, "scenario": s, **recovery_stats(self._select(v, s))})
            rows.append({"variant": v, "scenario": "all", **recovery_stats(self._select(v))})
        return rows

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "config": self.config,
            "results": self.results(),
            "recovery": self.recovery(),
            "episodes": self.episodes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationReport":
        if d.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema_version {d.get('schema_version')!r}")
        return cls(dict(d["config"]), list(d["episodes"]))

    @classmethod
    def load(cls, path) -> "EvaluationReport":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def check_consistency(self, stored: Optional[dict] = None) -> None:
        """Raise ``ValueError`` unless the aggregate tables match the episode list."""
        stored = stored if stored is not None else self.to_dict()
        if stored["results"] != self.results():
            raise ValueError("results table does not match the per-episode data")
        if stored["recovery"] != self.recovery():
            raise ValueError("recovery table does not match the per-episode data")
        for e in self.episodes:
            if e["success"] != (e["episode_length"] == self.config.get("max_steps", MAX_STEPS)):
                raise ValueError(f"episode {e['variant']}/{e['scenario']}/{e['seed']}: bad success flag")
            if e["variant"] == "no_recovery" and e["recovery_attempts"]:
                raise ValueError("no_recovery episode with recovery attempts")

    # -- presentation --------------------------------------------------------

    def results_csv(self) -> str:
        return _csv(["variant", "scenario", "episodes", "ER", "EL", "SR"], self.results())

    def recovery_csv(self) -> str:
        return _csv(["variant", "scenario", "attempts", "successes", "success_rate", "fallback_events"],
                    self.recovery())

    def episodes_csv(self) -> str:
        cols = ["variant", "scenario", "seed", "episodic_reward", "episode_length", "success",
                "recovery_attempts", "recovery_successes", "fallback_events"]
        return _csv(cols, self.episodes)

    def table(self) -> str:
        """Scenario columns by variant rows (ER / EL / SR), then the recovery table."""
        res = {(r["variant"], r["scenario"]): r for r in self.results()}
        head = ["variant"] + [f"{s} ER/EL/SR" for s in self.scenarios]
        body = []
        for v in self.variants:
            row = [v]
            for s in self.scenarios:
                c = res[(v, s)]
                row.append(f"{c['ER']:.1f} / {c['EL']:.1f} / {c['SR']:.2f}")
            body.append(row)
        rec_head = ["variant", "scenario", "attempts", "successes", "success rate"]
        rec_body = [[r["variant"], r["scenario"], str(r["attempts"]), str(r["successes"]),
                     "-" if r["success_rate"] is None else f"{r['success_rate']:.2f}"]
                    for r in self.recovery()]
        return _grid(head, body) + "\n\nRecovery phases\n" + _grid(rec_head, rec_body) + "\n"

    def write(self, path) -> List[Path]:
        """Write the JSON report plus CSV tables alongside it; returns the paths written."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        stem = path.with_suffix("")
        outputs = {
            path: self.to_json(),
            Path(f"{stem}_results.csv"): self.results_csv(),
            Path(f"{stem}_recovery.csv"): self.recovery_csv(),
            Path(f"{stem}_episodes.csv"): self.episodes_csv(),
        }
        for p, text in outputs.items():
            p.write_text(text, encoding="utf-8")
        return list(outputs)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv(cols: Sequence[str], rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in cols])
    return buf.getvalue()


def _grid(head: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(x)) for x in col) for col in zip(head, *rows)]
    line = lambda cells: "  ".join(str(c).ljust(w) for c, w in zip(cells, widths)).rstrip()
    return "\n".join([line(head), line(["-" * w for w in widths])] + [line(r) for r in rows])


def evaluate(scenarios: Sequence[Scenario], variants: Sequence[str] = tuple(VARIANTS),
             n_episodes: int = DEFAULT_EPISODES, base_seed: int = 0, *,
             reasoner_factory: Optional[Callable[[], object]] = None,
             memory_factory: Optional[Callable[[str], CaseMemory]] = None,
             max_steps: int = MAX_STEPS,
             progress: Optional[Callable[[str, str, int, EpisodeResult], None]] = None) -> EvaluationReport:
    """Run ``n_episodes`` seeded episodes per scenario for every variant.

    Seeds ``base_seed .. base_seed + n_episodes - 1`` are shared by all
    variants.  Each variant gets one fresh case memory that accumulates over
    all of its episodes (across scenarios, in the order given); episodes run
    sequentially so memory order, and hence the report, is deterministic.
    """
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise ValueError(f"unknown variants {unknown}; choose from {sorted(VARIANTS)}")
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    names = [sc.name for sc in scenarios]
    if len(set(names)) != len(names):
        raise ValueError("scenario names must be unique within one evaluation")
    for sc in scenarios:
        sc.validate()

    seeds = list(range(base_seed, base_seed + n_episodes))
    config = {
        "scenarios": names,
        "variants": list(variants),
        "n_episodes": n_episodes,
        "base_seed": base_seed,
        "seeds": seeds,
        "max_steps": max_steps,
        "reasoner": "oracle" if reasoner_factory is None else getattr(reasoner_factory, "name", "custom"),
        "scenario_defs": {sc.name: sc.to_dict() for sc in scenarios},
    }
    report = EvaluationReport(config)
    for variant in variants:
        memory = memory_factory(variant) if memory_factory is not None else CaseMemory()
        reasoner = reasoner_factory() if reasoner_factory is not None else None
        episode_id = 0
        for sc in scenarios:
            for seed in seeds:
                res = run_episode(sc, reasoner=reasoner, memory=memory, flags=VARIANTS[variant],
                                  seed=seed, episode_id=episode_id, max_steps=max_steps)
                episode_id += 1
                rec = res.to_dict()
                rec.pop("max_steps", None)
                report.episodes.append({"variant": variant, **rec})
                if progress is not None:
                    progress(variant, sc.name, seed, res)
    return report
