"""Command-line interface: ``run``, ``eval``, ``replay`` and ``scenarios``.

Exit codes: 0 success, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from .episode import VARIANTS, LogError, run_episode, write_log
from .harness import DEFAULT_EPISODES, evaluate
from .library import ARENAS, get_scenario, scenario_names
from .memory import CaseMemory, MemoryPersistenceError
from .replay import replay
from .scenario import Scenario, ScenarioError
from .vlm import DEFAULT_API_KEY_ENV, AuditLog, ConfigError, ModelEndpointConfig, VlmClient, VlmReasoner

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3


class CliError(Exception):
    def __init__(self, msg: str, code: int) -> None:
        super().__init__(msg)
        self.code = code


def load_scenario(ref: str) -> Scenario:
    """A library name such as ``pillars:dash`` or a path to a scenario JSON file."""
    p = Path(ref)
    if p.suffix == ".json" or p.exists():
        try:
            return Scenario.load(p)
        except OSError as exc:
            raise CliError(f"cannot read scenario file {p}: {exc}", EXIT_IO) from exc
    return get_scenario(ref)


def _reasoner(args) -> Optional[VlmReasoner]:
    if not getattr(args, "vlm_url", None):
        return None
    if not args.vlm_model:
        raise ConfigError("--vlm-model is required with --vlm-url")
    cfg = ModelEndpointConfig.from_env(args.vlm_url, args.vlm_model, env_var=args.vlm_key_env,
                                       timeout=args.vlm_timeout)
    audit = AuditLog(args.vlm_audit) if args.vlm_audit else None
    return VlmReasoner(VlmClient(cfg, audit=audit))


def _add_vlm_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("external model")
    g.add_argument("--vlm-url", help="chat-completion endpoint base URL (oracle reasoner when omitted)")
    g.add_argument("--vlm-model", help="model name sent with each request")
    g.add_argument("--vlm-key-env", default=DEFAULT_API_KEY_ENV,
                   help=f"environment variable holding the API key (default {DEFAULT_API_KEY_ENV})")
    g.add_argument("--vlm-timeout", type=float, default=30.0, help="request timeout in seconds")
    g.add_argument("--vlm-audit", type=Path, help="append every request and reply to this JSONL file")


def cmd_run(args) -> int:
    sc = load_scenario(args.scenario)
    reasoner = _reasoner(args)
    memory = CaseMemory(args.memory_file) if args.memory_file else None
    log: List[dict] = []
    res = run_episode(sc, reasoner=reasoner, memory=memory, flags=VARIANTS[args.variant],
                      seed=args.seed, log=log if args.log else None)
    if args.log:
        write_log(log, args.log)
    print(json.dumps(res.to_dict(), sort_keys=True))
    return EXIT_OK


def cmd_eval(args) -> int:
    names = args.scenario or list(ARENAS)
    scenarios = [load_scenario(n) for n in names]
    variants = list(VARIANTS) if not args.variant or "all" in args.variant else args.variant
    memory_factory = None
    if args.memory_dir:
        mdir = Path(args.memory_dir)
        mdir.mkdir(parents=True, exist_ok=True)
        existing = [mdir / f"memory_{v}.jsonl" for v in variants if (mdir / f"memory_{v}.jsonl").exists()]
        if existing:
            raise CliError(f"refusing to reuse existing memory files: {', '.join(map(str, existing))}",
                           EXIT_CONFIG)
        memory_factory = lambda v: CaseMemory(mdir / f"memory_{v}.jsonl")
    factory = None
    if args.vlm_url:
        _reasoner(args)  # fail fast on configuration before running anything
        factory = lambda: _reasoner(args)
        factory.name = f"vlm:{args.vlm_model}"

    def progress(variant, scenario, seed, res):
        if args.verbose:
            print(f"{variant:14s} {scenario:16s} seed {seed:4d} length {res.episode_length:3d} "
                  f"success {res.success}", file=sys.stderr)

    report = evaluate(scenarios, variants, args.episodes, args.base_seed, reasoner_factory=factory,
                      memory_factory=memory_factory, progress=progress)
    print(report.table(), end="")
    if args.report:
        written = report.write(args.report)
        if not args.no_figures:
            from .plotting import write_figures
            written += write_figures(report, args.report)
        for p in written:
            print(f"wrote {p}")
    return EXIT_OK


def cmd_replay(args) -> int:
    summary = replay(args.log, args.render_dir)
    for line in summary.lines:
        print(line)
    print(f"{summary.steps} steps, {summary.transitions} phase transitions, "
          f"{summary.attempts} recovery attempts, {summary.reflections} reflections")
    if args.render_dir:
        print(f"rendered {len(summary.frames)} frames into {args.render_dir}")
    return EXIT_OK


def cmd_scenarios(args) -> int:
    if args.action == "list":
        for name in scenario_names():
            sc = get_scenario(name)
            print(f"{name:16s} {len(sc.obstacles):3d} obstacles  {len(sc.waypoints):2d} waypoints  "
                  f"{'loop' if sc.loop else 'once'}")
        return EXIT_OK
    targets = args.paths or scenario_names()
    bad = 0
    for t in targets:
        try:
            load_scenario(t)
        except ScenarioError as exc:
            bad += 1
            print(f"INVALID {t}: {exc}")
        else:
            print(f"ok      {t}")
    return EXIT_CONFIG if bad else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evtrecover", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one episode")
    p.add_argument("--scenario", default="pillars", help="library name (arena[:pattern]) or JSON file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variant", choices=sorted(VARIANTS), default="full")
    p.add_argument("--memory-file", type=Path, help="JSONL case memory to load and append to")
    p.add_argument("--log", type=Path, help="write the trajectory log (JSONL) here")
    _add_vlm_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="batch evaluation over scenarios and variants")
    p.add_argument("--scenario", action="append",
                   help="scenario name or file; repeatable (default: the four arenas' dash routes)")
    p.add_argument("--variant", action="append", choices=sorted(VARIANTS) + ["all"],
                   help="repeatable (default: all four)")
    p.add_argument("--episodes", type=int, default=DEFAULT_EPISODES)
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--report", type=Path, help="write JSON report, CSV tables and figures here")
    p.add_argument("--memory-dir", type=Path, help="persist each variant's case memory in this directory")
    p.add_argument("--no-figures", action="store_true", help="skip the PNG figures")
    p.add_argument("-v", "--verbose", action="store_true", help="print one line per episode to stderr")
    _add_vlm_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("replay", help="print the timeline of a trajectory log")
    p.add_argument("--log", type=Path, required=True)
    p.add_argument("--render-dir", type=Path, help="re-render one PNG per step into this directory")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("scenarios", help="list or validate scenarios")
    p.add_argument("action", choices=["list", "validate"])
    p.add_argument("paths", nargs="*", help="scenario names or files to validate (default: library)")
    p.set_defaults(func=cmd_scenarios)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, ScenarioError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LogError, MemoryPersistenceError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
