"""Command line: capcycle <command> [options].

Exit status 0 on success, 1 on a domain error, 2 on a usage or configuration
error.  Errors are printed to stderr as one JSON record.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any, NoReturn

from pydantic import ValidationError

from capcycle import workflow
from capcycle.config import ClusterConfig, ExplorationConfig, ProjectSettings, SamplerConfig, SimConfig, ValidatorConfig
from capcycle.cores import Constraint
from capcycle.errors import CONFIG_INVALID, INTERNAL_ERROR, CapCycleError, UsageError
from capcycle.fixtures import FIXTURES
from capcycle.log import configure_logging
from capcycle.project import Project, now
from capcycle.reason import Mission, solve_mission, solve_task

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        raise UsageError(message, usage=self.format_usage().strip())


# ---------------------------------------------------------- value parsing

def parse_vector(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"not a comma-separated vector: {text!r}") from None


def parse_targets(items: Sequence[str]) -> dict[str, list[float]]:
    """``space=v1,v2,...`` items into a target map."""
    targets: dict[str, list[float]] = {}
    for item in items:
        space, sep, values = item.partition("=")
        if not sep or not space:
            raise UsageError(f"target must look like space=v1,v2,...: {item!r}")
        targets[space.strip()] = parse_vector(values)
    return targets


def parse_part(text: str) -> workflow.PartPlan:
    """``core:space=v,...;space=v,...`` into a parallel-run part."""
    core, _, rest = text.partition(":")
    if not core:
        raise UsageError(f"part must look like core:space=v,...: {text!r}")
    return workflow.PartPlan(core, parse_targets([t for t in rest.split(";") if t.strip()]))


def parse_range(item: str) -> Constraint:
    space, sep, values = item.partition("=")
    bounds = parse_vector(values)
    if not sep or len(bounds) != 2:
        raise UsageError(f"constraint must look like space=lo,hi: {item!r}")
    return Constraint.minmax(space, *bounds)


def _sampler(args: argparse.Namespace) -> SamplerConfig:
    return SamplerConfig(particles=args.particles, iterations=args.iterations, seed=args.seed)


def _sim(args: argparse.Namespace) -> SimConfig:
    return SimConfig(dt=args.dt, horizon=args.horizon)


def _print(doc: Any) -> None:
    print(json.dumps(doc, indent=2, sort_keys=True))


# ----------------------------------------------------------------- commands

def cmd_assemble(project: Project, args: argparse.Namespace) -> dict[str, Any]:
    outputs = workflow.assemble(project, args.fixture, args.robot)
    spec = project.robot_spec(args.robot)
    _print({"robot": spec.name, "joints": spec.joint_names, "reach_m": spec.reach})
    return {"outputs": outputs, "inputs": [project.graph_path]}


def cmd_explore(project: Project, args: argparse.Namespace) -> dict[str, Any]:
    config = ExplorationConfig(samples=args.samples, seed=args.seed, workers=args.workers, sim=_sim(args))
    capset, outputs = workflow.explore_robot(project, args.robot, config)
    _print(capset.manifest())
    return {"config": config, "seed": args.seed, "inputs": [project.graph_path], "outputs": outputs}


def cmd_train_validator(project: Project, args: argparse.Namespace) -> dict[str, Any]:
    config = ValidatorConfig(seed=args.seed, epochs=args.epochs)
    _, metrics, outputs = workflow.train_robot_validator(project, args.robot, config)
    _print(metrics)
    return {"config": config, "seed": args.seed, "inputs": [project.set_dir(args.robot)], "outputs": outputs}


def cmd_cluster(project: Project, args: argparse.Namespace) -> dict[str, Any]:
    config = ClusterConfig(
        spaces=tuple(args.spaces.split(",")),
        ks=tuple(int(k) for k in parse_vector(args.ks)),
        components=args.components,
        seed=args.seed,
    )
    store, scores, outputs = workflow.cluster_robot(project, args.robot, config, args.accuracy)
    _print({"clusters": {s: c.k for s, c in store.spaces.items()}, "accuracy": scores})
    return {"config": config, "seed": args.seed, "inputs": [project.set_dir(args.robot)], "outputs": outputs}


def cmd_core_create(project: Project, args: argparse.Namespace) -> dict[str, Any]:
    sampler = _sampler(args)
    core, outputs = workflow.create_robot_core(project, args.robot, args.bm, sampler)
    _print(core.to_dict())
    return {"config": sampler, "seed": args.seed, "inputs": [project.clusters_dir(args.robot)], "outputs": outputs}


def cmd_core_sample(project: Project, args: argparse.Namespace) -> dict[str, Any]:
    core = project.core(args.core)
    sampler = core.sampler.model_copy(update={"seed": args.seed})
    sample, outputs = workflow.sample_robot_core(
        project, args.core, parse_targets(args.target), sampler, Path(args.plot_out) if args.plot_out else None
    )
    _print({k: v for k, v in sample.to_dict().items() if k != "alternates"})
    return {"config": sampler, "seed": args.seed, "inputs": [project.clusters_dir(core.robot)], "outputs": outputs}


def cmd_core_annotate(project: Project, args: argparse.Namespace) -> dict[str, Any]:
    core, outputs = workflow.annotate_robot_core(project, args.core, args.add_label, args.remove_label, args.strict)
    _print({"id": core.id, "version": core.version, "labels": list(core.labels)})
    return {"outputs": outputs}


def cmd_core_parallel(project: Project, args: argparse.Namespace) -> dict[str, Any]:
    _, summary, outputs = workflow.run_parallel(project, args.robot, [parse_part(p) for p in args.part])
    _print(summary)
    return {"inputs": [project.cores_dir], "outputs": outputs}


def cmd_solve_task(project: Project, args: argparse.Namespace) -> dict[str, Any]:
    labels = [label for label in args.labels.split(",") if label]
    constraints = [parse_range(c) for c in args.constraint]
    grouped = solve_task(labels, project.cores(), project.ontology(), constraints, args.exact)
    _print({robot: [c.id for c in cores] for robot, cores in grouped.items()})
    return {"inputs": [project.cores_dir]}


def cmd_mission_solve(project: Project, args: argparse.Namespace) -> dict[str, Any]:
    mission = Mission.load(args.file)
    solution = solve_mission(mission, project.vocabulary(), project.cores(), project.ontology(), args.exact)
    _print(solution.to_dict())
    return {"inputs": [Path(args.file), project.cores_dir]}


def cmd_report(project: Project, args: argparse.Namespace) -> dict[str, Any]:
    parallel = None
    if args.parallel_robot:
        parallel = (args.parallel_robot, [parse_part(p) for p in args.part])
    summary, outputs = workflow.reach_report(
        project, args.robot, parse_targets(args.target), args.samples, args.seed, parallel=parallel
    )
    _print(summary)
    return {"seed": args.seed, "inputs": [project.cores_dir, project.clusters_dir(args.robot)], "outputs": outputs}


def cmd_cycle(project: Project, args: argparse.Namespace) -> dict[str, Any]:
    exploration = ExplorationConfig(samples=args.samples, seed=args.seed, workers=args.workers, sim=_sim(args))
    clustering = ClusterConfig(
        spaces=tuple(args.spaces.split(",")),
        ks=tuple(int(k) for k in parse_vector(args.ks)),
        seed=args.seed,
    )
    cycle = workflow.DevelopmentCycle(
        project, args.fixture, args.robot, exploration,
        ValidatorConfig(seed=args.seed, epochs=args.epochs), clustering, _sampler(args),
    )
    _print(cycle.run())
    return {"config": exploration, "seed": args.seed, "outputs": cycle.outputs}


# ------------------------------------------------------------------- parser

def _add_sim(p: argparse.ArgumentParser, horizon: float = 4.0) -> None:
    p.add_argument("--dt", type=float, default=0.02)
    p.add_argument("--horizon", type=float, default=horizon)


def _add_swarm(p: argparse.ArgumentParser) -> None:
    p.add_argument("--particles", type=int, default=64)
    p.add_argument("--iterations", type=int, default=200)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="capcycle", description="Robot development cycle: assemble, explore, cluster, ground, solve.")
    parser.add_argument("--project", help="project root (default: $CAPCYCLE_PROJECT or the current directory)")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = commands.add_parser("assemble", help="build a reference robot into the component graph")
    p.add_argument("--fixture", choices=sorted(FIXTURES), required=True)
    p.add_argument("--robot", required=True)
    p.set_defaults(handler=cmd_assemble)

    p = commands.add_parser("explore", help="simulate random capabilities of a robot")
    p.add_argument("--robot", required=True)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--workers", type=int, default=1)
    _add_sim(p)
    p.set_defaults(handler=cmd_explore)

    p = commands.add_parser("train-validator", help="fit the feasibility classifier")
    p.add_argument("--robot", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--epochs", type=int, default=60)
    p.set_defaults(handler=cmd_train_validator)

    p = commands.add_parser("cluster", help="cluster capabilities per feature space")
    p.add_argument("--robot", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--spaces", default="start,end,dir")
    p.add_argument("--ks", default="50,50,5")
    p.add_argument("--components", type=int, default=3)
    p.add_argument("--accuracy", action="store_true", help="also measure generative-model accuracy")
    p.set_defaults(handler=cmd_cluster)

    core = commands.add_parser("core", help="cognitive cores").add_subparsers(
        dest="core_command", required=True, parser_class=_Parser
    )
    p = core.add_parser("create")
    p.add_argument("--robot", required=True)
    p.add_argument("--bm", required=True, help="behavior model label")
    p.add_argument("--seed", type=int, default=0, help="sampler seed stored with the core")
    _add_swarm(p)
    p.set_defaults(handler=cmd_core_create)

    p = core.add_parser("sample")
    p.add_argument("--core", required=True)
    p.add_argument("--target", action="append", default=[], help="space=v1,v2,... (repeatable)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--plot-out")
    p.set_defaults(handler=cmd_core_sample)

    p = core.add_parser("annotate")
    p.add_argument("--core", required=True)
    p.add_argument("--add-label", action="append", default=[])
    p.add_argument("--remove-label", action="append", default=[])
    p.add_argument("--strict", action="store_true", help="reject labels missing from the ontology")
    p.set_defaults(handler=cmd_core_annotate)

    p = core.add_parser("parallel")
    p.add_argument("--robot", required=True, help="combined robot")
    p.add_argument("--part", action="append", required=True, help="core:space=v,...;space=v,... (repeatable)")
    p.set_defaults(handler=cmd_core_parallel)

    p = commands.add_parser("solve-task", help="find cores matching a labelled task")
    p.add_argument("--labels", required=True)
    p.add_argument("--constraint", action="append", default=[], help="space=lo,hi (repeatable)")
    p.add_argument("--exact", action="store_true")
    p.set_defaults(handler=cmd_solve_task)

    mission = commands.add_parser("mission", help="missions").add_subparsers(
        dest="mission_command", required=True, parser_class=_Parser
    )
    p = mission.add_parser("solve")
    p.add_argument("file")
    p.add_argument("--exact", action="store_true")
    p.set_defaults(handler=cmd_mission_solve)

    p = commands.add_parser("report", help="plot-data tables for reach samples")
    p.add_argument("--robot", required=True)
    p.add_argument("--target", action="append", default=[])
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--parallel-robot")
    p.add_argument("--part", action="append", default=[])
    p.set_defaults(handler=cmd_report)

    p = commands.add_parser("cycle", help="assemble, explore, validate, cluster and ground in one go")
    p.add_argument("--fixture", choices=sorted(FIXTURES), required=True)
    p.add_argument("--robot", required=True)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--spaces", default="start,end,dir")
    p.add_argument("--ks", default="50,50,5")
    _add_sim(p)
    _add_swarm(p)
    p.set_defaults(handler=cmd_cycle)
    return parser


def _error(record: dict[str, Any], status: int) -> int:
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    return status


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        configure_logging(args.verbose)
        project = Project(ProjectSettings.resolve(args.project).root)
        started = now()
        with project.lock():
            run = args.handler(project, args)
            config = run.get("config")
            project.record(
                " ".join(argv),
                started,
                config=config.model_dump(mode="json") if config is not None else None,
                config_hash=config.config_hash() if config is not None else None,
                seed=run.get("seed"),
                inputs=[p for p in run.get("inputs", []) if p.exists()],
                outputs=run.get("outputs", []),
            )
    except UsageError as exc:
        return _error(exc.to_record(), 2)
    except ValidationError as exc:
        return _error({"code": CONFIG_INVALID, "module": "cli", "message": str(exc)}, 2)
    except CapCycleError as exc:
        return _error(exc.to_record(), 1)
    except Exception as exc:  # pylint: disable=broad-except
        logger.exception("unexpected failure")
        return _error({"code": INTERNAL_ERROR, "module": "cli", "message": str(exc)}, 1)
    return 0
