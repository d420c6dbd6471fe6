"""Command-line entry point for reproducible viewpoint-retrieval runs.

One binary, subcommand style.  A JSON config file supplies defaults, flags
override it, and VIEWSPHERE_SCORER_URL is the only environment input (the
remote scorer URL).  Stochastic commands refuse to run without an explicit
seed, and every directory-producing command writes a run-metadata file that
suffices to reproduce its outputs byte for byte.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .camera import CANONICAL_VIEWS, ViewConvention, canonical_direction
from .goldeval import (
    DEFAULT_EPSILON,
    DEFAULT_SIGMA,
    EvalEntry,
    GoldDistribution,
    RankedList,
    RetrievalQuery,
    evaluate_model,
    gold_distribution,
)
from .losses import (
    EmbeddingBatch,
    LossConfig,
    in_batch_hard_negative_loss,
    contrastive_loss,
    random_contrast_loss,
    total_loss,
)
from .polysphere import PolySphere, build_sphere
from .provider import EmbeddingCache, ablation_subsets, load_manifest, save_manifest
from .scorer import Query, ScoreMap, compute_score_map, resolve_scorer
from .search import (
    BayesConfig,
    CameraBounds,
    GreedyConfig,
    SearchTrace,
    TraceEntry,
    bayesian_search,
    greedy_search,
    run_benchmark,
)
from .viz import HexMapStyle, render_hexmap

LOCK_NAME = ".viewsphere.lock"

STOCHASTIC_HINT = "stochastic commands require an explicit --seed"


class CliError(Exception):
    """Command failed; message is the single-line diagnostic."""


class OutputStage:
    """Tracks written paths so a failed command leaves nothing behind."""

    def __init__(self):
        self.paths: list[Path] = []
        self.lock: Path | None = None

    def lock_dir(self, directory: Path) -> None:
        directory.mkdir(parents=True, exist_ok=True)
        lock = directory / LOCK_NAME
        try:
            fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise CliError(f"output directory {directory} is locked by another run ({lock})")
        os.close(fd)
        self.lock = lock

    def write_text(self, path: Path, content: str) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(content, encoding="utf-8")
        self.paths.append(path)

    def abort(self) -> None:
        for path in self.paths:
            try:
                path.unlink()
            except OSError:
                pass
        self.release()

    def release(self) -> None:
        if self.lock is not None:
            try:
                self.lock.unlink()
            except OSError:
                pass
            self.lock = None


def _versions() -> dict:
    import scipy

    return {
        "viewsphere": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def _write_metadata(stage: OutputStage, outdir: Path, args, config: dict,
                    sphere: PolySphere | None, seed: int | None) -> None:
    meta = {
        "command": args.command_path,
        "argv": args.raw_argv,
        "config": config,
        "seed": seed,
        "versions": _versions(),
        "sphere_checksum": sphere.checksum if sphere is not None else None,
    }
    stage.write_text(outdir / "run_metadata.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {path}: {exc}")


def _convention(config: dict) -> ViewConvention:
    conv = config.get("convention", {})
    return ViewConvention.from_names(conv.get("up", "+Y"), conv.get("front", "-Z"))


def _load_sphere(path: str) -> PolySphere:
    try:
        return PolySphere.load(path)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot load sphere {path}: {exc}")


def _greedy_config(config: dict) -> GreedyConfig:
    g = config.get("greedy", {})
    return GreedyConfig(
        k=g.get("k", 6), c=g.get("c", 3), n=g.get("n", 1), i=g.get("i", 100)
    )


def _bayes_config(config: dict) -> BayesConfig:
    b = config.get("bayes", {})
    kwargs = {k: b[k] for k in (
        "initial_samples", "length_scales", "signal_variance", "noise", "xi",
        "candidate_pool", "local_candidates", "local_scale", "optimize_hyperparams",
    ) if k in b}
    if "length_scales" in kwargs:
        kwargs["length_scales"] = tuple(kwargs["length_scales"])
    return BayesConfig(**kwargs)


def _oracle_options(config: dict) -> dict:
    o = config.get("oracle", {})
    return {
        "oracle_seed": o.get("seed", 1234),
        "oracle_amplitude": o.get("amplitude", 0.25),
        "oracle_bumps": o.get("bumps", 6),
        "oracle_bump_height": o.get("bump_height", 0.6),
    }


def _style(config: dict) -> HexMapStyle:
    s = config.get("style", {})
    valid = {f.name for f in HexMapStyle.__dataclass_fields__.values()}
    return HexMapStyle(**{k: v for k, v in s.items() if k in valid})


def _require_seed(args) -> int:
    if args.seed is None:
        raise CliError(STOCHASTIC_HINT)
    return args.seed


def _gold_cell(sphere, convention, view: str | None, cell: int | None) -> int:
    if cell is not None:
        if not 0 <= cell < sphere.n_cells:
            raise CliError(f"gold cell {cell} out of range")
        return cell
    if view is None:
        raise CliError("either --view or --cell is required")
    return sphere.nearest_cell(canonical_direction(convention, view))


# -- command handlers --------------------------------------------------------


def cmd_sphere_build(args, config, stage) -> int:
    sphere = build_sphere(args.freq)
    sphere.save(args.output)
    stage.paths.append(Path(args.output))
    print(f"built frequency-{args.freq} sphere: {sphere.n_cells} cells -> {args.output}")
    return 0


def cmd_gold(args, config, stage) -> int:
    sphere = _load_sphere(args.sphere)
    convention = _convention(config)
    sigma = args.sigma if args.sigma is not None else config.get("sigma", DEFAULT_SIGMA)
    cell = _gold_cell(sphere, convention, args.view, args.cell)
    gold = gold_distribution(sphere, cell, sigma)
    payload = {
        "format": "viewsphere-gold",
        "version": 1,
        "view": args.view,
        "sphere_checksum": sphere.checksum,
        **gold.to_dict(),
    }
    stage.write_text(Path(args.output), json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"gold distribution at cell {cell} (sigma={sigma}) -> {args.output}")
    return 0


def cmd_scoremap(args, config, stage) -> int:
    sphere = _load_sphere(args.sphere)
    convention = _convention(config)
    query = Query(args.category, args.view)
    scorer = resolve_scorer(
        args.scorer, sphere, query, convention=convention, **_oracle_options(config)
    )
    radius = args.radius if args.radius is not None else config.get("radii", [5.0])[0]
    smap = compute_score_map(scorer, sphere, query, radius)
    smap.save(args.output)
    stage.paths.append(Path(args.output))
    print(f"score map for {query.text!r} ({scorer.scorer_id}) -> {args.output}")
    return 0


def cmd_eval_kl(args, config, stage) -> int:
    sphere = _load_sphere(args.sphere)
    convention = _convention(config)
    sigma = args.sigma if args.sigma is not None else config.get("sigma", DEFAULT_SIGMA)
    epsilon = args.epsilon if args.epsilon is not None else config.get("epsilon", DEFAULT_EPSILON)
    outdir = Path(args.output)
    stage.lock_dir(outdir)
    entries = []
    golds: dict[str, GoldDistribution] = {}
    for path in args.map:
        smap = ScoreMap.load(path)
        if smap.sphere_checksum != sphere.checksum:
            raise CliError(f"score map {path} was computed on a different sphere")
        view = smap.query.view
        if view not in golds:
            cell = sphere.nearest_cell(canonical_direction(convention, view))
            golds[view] = gold_distribution(sphere, cell, sigma)
        entries.append(EvalEntry(Path(path).stem, smap.query.category, view, smap))
    report = evaluate_model(entries, golds, epsilon=epsilon)
    stage.write_text(outdir / "report.json", report.to_json())
    stage.write_text(outdir / "report.txt", report.to_text())
    _write_metadata(stage, outdir, args, config, sphere, None)
    print(report.to_text(), end="")
    return 0


def cmd_eval_retrieval(args, config, stage) -> int:
    sphere = _load_sphere(args.sphere)
    convention = _convention(config)
    manifest = load_manifest(args.manifest, sphere, check_files=not args.no_check_files)
    outdir = Path(args.output)
    stage.lock_dir(outdir)
    records = [r for r in manifest.records if r.split == args.split]
    if not records:
        raise CliError(f"manifest has no records in split {args.split!r}")
    views = args.views.split(",") if args.views else list(CANONICAL_VIEWS)
    categories = sorted({r.category for r in records})
    queries: list[RetrievalQuery] = []
    for category in categories:
        cat_records = [r for r in records if r.category == category]
        for view in views:
            query = Query(category, view)
            scorer = resolve_scorer(
                args.scorer, sphere, query, convention=convention, **_oracle_options(config)
            )
            scored = []
            for r in cat_records:
                if r.cell is None:
                    continue
                scored.append((r.image, scorer.score_cell(query, r.cell, r.radius)))
            relevant = frozenset(r.image for r in cat_records if r.view == view)
            if not scored or not relevant:
                raise CliError(f"no scorable or relevant records for ({category}, {view})")
            queries.append(RetrievalQuery(
                split=args.split, label=f"{category}/{view}",
                ranking=RankedList.from_scores(scored), relevant=relevant,
            ))
    report = evaluate_model(retrieval_queries=queries)
    stage.write_text(outdir / "report.json", report.to_json())
    stage.write_text(outdir / "report.txt", report.to_text())
    _write_metadata(stage, outdir, args, config, sphere, None)
    print(report.to_text(), end="")
    return 0


def cmd_search_run(args, config, stage) -> int:
    seed = _require_seed(args)
    sphere = _load_sphere(args.sphere)
    convention = _convention(config)
    query = Query(args.category, args.view)
    scorer = resolve_scorer(
        args.scorer, sphere, query, convention=convention, **_oracle_options(config)
    )
    outdir = Path(args.output)
    stage.lock_dir(outdir)
    radius = config.get("radii", [5.0])[0]
    if args.algo == "greedy":
        trace = greedy_search(
            sphere, scorer, query, _greedy_config(config), args.budget, seed, radius=radius
        )
    else:
        trace = bayesian_search(
            CameraBounds(r=(radius, radius)), sphere, scorer, query,
            _bayes_config(config), args.budget, seed, radii=(radius,),
        )
    gold = sphere.nearest_cell(canonical_direction(convention, args.view))
    summary = {
        "algorithm": args.algo,
        "scorer": scorer.scorer_id,
        "query": {"category": args.category, "view": args.view},
        "gold_cell": gold,
        "calls": trace.calls,
        "best_cell": trace.best_cell,
        "best_score": max(e.score for e in trace.entries),
        "reason": trace.reason,
        "distance_to_gold": sphere.graph_distance(trace.best_cell, gold),
    }
    stage.write_text(outdir / "trace.jsonl", trace.to_jsonl())
    stage.write_text(outdir / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _write_metadata(stage, outdir, args, config, sphere, seed)
    print(f"search finished: {trace.calls} calls, best cell {trace.best_cell} "
          f"({summary['distance_to_gold']} rings from gold), reason={trace.reason}")
    return 0


def cmd_bench(args, config, stage) -> int:
    seed = _require_seed(args)
    sphere = _load_sphere(args.sphere)
    convention = _convention(config)
    bench_conf = config.get("bench", {})
    n_runs = args.runs if args.runs is not None else bench_conf.get("runs", 10)
    c_max = args.budget if args.budget is not None else bench_conf.get("c_max", 300)
    radius = config.get("radii", [5.0])[0]
    views = args.views.split(",") if args.views else list(CANONICAL_VIEWS)
    queries = [Query(args.category, v) for v in views]
    outdir = Path(args.output)
    stage.lock_dir(outdir)
    result = run_benchmark(
        sphere, args.algo, args.scorer, queries,
        n_runs=n_runs, c_max=c_max, master_seed=seed, convention=convention,
        radius=radius, greedy_config=_greedy_config(config),
        bayes_config=_bayes_config(config), **_oracle_options(config),
    )
    stage.write_text(outdir / "bench.json", result.to_json())
    stage.write_text(outdir / "bench.txt", result.to_text())
    stage.write_text(outdir / "traces.jsonl", result.traces_jsonl())
    _write_metadata(stage, outdir, args, config, sphere, seed)
    print(result.to_text(), end="")
    return 0


def cmd_render(args, config, stage) -> int:
    sphere = _load_sphere(args.sphere)
    convention = _convention(config)
    style = _style(config)
    gold_cell = None
    if args.map:
        smap = ScoreMap.load(args.map)
        if smap.sphere_checksum != sphere.checksum:
            raise CliError(f"score map {args.map} was computed on a different sphere")
        values = smap
        if args.gold_view:
            gold_cell = sphere.nearest_cell(canonical_direction(convention, args.gold_view))
    elif args.gold_view:
        sigma = args.sigma if args.sigma is not None else config.get("sigma", DEFAULT_SIGMA)
        cell = sphere.nearest_cell(canonical_direction(convention, args.gold_view))
        values = gold_distribution(sphere, cell, sigma)
    else:
        raise CliError("render needs --map or --gold-view")
    trace = None
    if args.trace:
        entries = []
        with open(args.trace, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    row = json.loads(line)
                    pose = tuple(row["pose"]) if row.get("pose") else None
                    entries.append(TraceEntry(row["call"], row["cell"], row["score"], pose))
        trace = SearchTrace(entries=tuple(entries), reason="budget", budget=max(1, len(entries)))
    svg = render_hexmap(sphere, values, style, trace=trace, gold_cell=gold_cell)
    stage.write_text(Path(args.output), svg)
    print(f"rendered hexmap -> {args.output}")
    return 0


def cmd_loss_eval(args, config, stage) -> int:
    cache = EmbeddingCache.load(args.cache)
    try:
        with open(args.batch, "r", encoding="utf-8") as fh:
            spec = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read batch file {args.batch}: {exc}")
    try:
        pairs = spec["pairs"]
        zv = cache.matrix([p[0] for p in pairs])
        zq = cache.matrix([p[1] for p in pairs])
        zr = cache.matrix(spec["random"]) if spec.get("random") else None
    except KeyError as exc:
        raise CliError(f"batch references a key missing from the cache: {exc}")
    batch = EmbeddingBatch(zv, zq, zr)
    loss_conf = LossConfig(
        tau=spec.get("tau", 0.07), g=spec.get("g", 1.0),
        beta_hard=spec.get("beta_hard", 1.0), alpha=spec.get("alpha", 1.0),
        beta=spec.get("beta", 1.0), gamma=spec.get("gamma", 1.0),
    )
    components = {"tau": loss_conf.tau}
    components["contrastive"] = contrastive_loss(batch, loss_conf.tau).loss
    if batch.zr is not None and batch.zr.shape[0]:
        components["random_contrast"] = random_contrast_loss(batch, loss_conf.tau)
    if batch.n >= 2:
        components["hard_negative"] = in_batch_hard_negative_loss(
            batch, loss_conf.g, loss_conf.beta_hard
        )
    components["total"] = total_loss(batch, loss_conf)
    text = json.dumps(components, indent=2, sort_keys=True) + "\n"
    if args.output:
        stage.write_text(Path(args.output), text)
    print(text, end="")
    return 0


def cmd_ablate(args, config, stage) -> int:
    seed = _require_seed(args)
    manifest = load_manifest(args.manifest, check_files=False)
    sizes = [int(s) for s in args.sizes.split(",")]
    outdir = Path(args.output)
    stage.lock_dir(outdir)
    subsets = ablation_subsets(manifest, sizes, seed)
    for size, subset in zip(sizes, subsets):
        path = outdir / f"manifest_{size}.json"
        save_manifest(subset, path)
        stage.paths.append(path)
    _write_metadata(stage, outdir, args, config, None, seed)
    print(f"wrote {len(sizes)} nested subsets to {outdir}")
    return 0


# -- argument parsing ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="viewsphere",
        description="viewpoint retrieval benchmark: spheres, scorers, search, evaluation",
    )
    parser.add_argument("--config", help="JSON config file with defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    sphere = sub.add_parser("sphere", help="sphere construction").add_subparsers(
        dest="subcommand", required=True
    )
    build = sphere.add_parser("build", help="build and save a sphere")
    build.add_argument("--freq", type=int, required=True)
    build.add_argument("-o", "--output", required=True)
    build.set_defaults(handler=cmd_sphere_build, command_path="sphere build")

    gold = sub.add_parser("gold", help="gold distribution for a canonical view")
    gold.add_argument("--sphere", required=True)
    gold.add_argument("--view", choices=CANONICAL_VIEWS)
    gold.add_argument("--cell", type=int)
    gold.add_argument("--sigma", type=float)
    gold.add_argument("-o", "--output", required=True)
    gold.set_defaults(handler=cmd_gold, command_path="gold")

    smap = sub.add_parser("scoremap", help="score every cell for one query")
    smap.add_argument("--sphere", required=True)
    smap.add_argument("--scorer", required=True)
    smap.add_argument("--category", required=True)
    smap.add_argument("--view", required=True, choices=CANONICAL_VIEWS)
    smap.add_argument("--radius", type=float)
    smap.add_argument("-o", "--output", required=True)
    smap.set_defaults(handler=cmd_scoremap, command_path="scoremap")

    ev = sub.add_parser("eval", help="evaluation metrics").add_subparsers(
        dest="subcommand", required=True
    )
    kl = ev.add_parser("kl", help="KL divergence of score maps against gold")
    kl.add_argument("--sphere", required=True)
    kl.add_argument("--map", action="append", required=True)
    kl.add_argument("--sigma", type=float)
    kl.add_argument("--epsilon", type=float)
    kl.add_argument("-o", "--output", required=True)
    kl.set_defaults(handler=cmd_eval_kl, command_path="eval kl")

    ret = ev.add_parser("retrieval", help="precision/recall over a manifest")
    ret.add_argument("--sphere", required=True)
    ret.add_argument("--manifest", required=True)
    ret.add_argument("--scorer", required=True)
    ret.add_argument("--split", default="test")
    ret.add_argument("--views")
    ret.add_argument("--no-check-files", action="store_true")
    ret.add_argument("-o", "--output", required=True)
    ret.set_defaults(handler=cmd_eval_retrieval, command_path="eval retrieval")

    sr = sub.add_parser("search", help="viewpoint search").add_subparsers(
        dest="subcommand", required=True
    )
    run = sr.add_parser("run", help="one search run")
    run.add_argument("--sphere", required=True)
    run.add_argument("--scorer", required=True)
    run.add_argument("--algo", choices=("greedy", "bayes"), required=True)
    run.add_argument("--category", required=True)
    run.add_argument("--view", required=True, choices=CANONICAL_VIEWS)
    run.add_argument("--seed", type=int)
    run.add_argument("--budget", type=int, default=300)
    run.add_argument("-o", "--output", required=True)
    run.set_defaults(handler=cmd_search_run, command_path="search run")

    bench = sub.add_parser("bench", help="search benchmark table")
    bench.add_argument("--sphere", required=True)
    bench.add_argument("--scorer", action="append", required=True)
    bench.add_argument("--algo", action="append", choices=("greedy", "bayes"), required=True)
    bench.add_argument("--category", default="car")
    bench.add_argument("--views")
    bench.add_argument("--seed", type=int)
    bench.add_argument("--runs", type=int)
    bench.add_argument("--budget", type=int)
    bench.add_argument("-o", "--output", required=True)
    bench.set_defaults(handler=cmd_bench, command_path="bench")

    render = sub.add_parser("render", help="render a hexmap SVG")
    render.add_argument("--sphere", required=True)
    render.add_argument("--map")
    render.add_argument("--gold-view", choices=CANONICAL_VIEWS)
    render.add_argument("--sigma", type=float)
    render.add_argument("--trace")
    render.add_argument("-o", "--output", required=True)
    render.set_defaults(handler=cmd_render, command_path="render")

    loss = sub.add_parser("loss", help="loss objectives").add_subparsers(
        dest="subcommand", required=True
    )
    leval = loss.add_parser("eval", help="evaluate losses on an embedding cache")
    leval.add_argument("--cache", required=True)
    leval.add_argument("--batch", required=True)
    leval.add_argument("-o", "--output")
    leval.set_defaults(handler=cmd_loss_eval, command_path="loss eval")

    ablate = sub.add_parser("ablate", help="nested training-size subsets")
    ablate.add_argument("--manifest", required=True)
    ablate.add_argument("--sizes", default="1000,100,10,1")
    ablate.add_argument("--seed", type=int)
    ablate.add_argument("-o", "--output", required=True)
    ablate.set_defaults(handler=cmd_ablate, command_path="ablate")

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.raw_argv = argv
    config = {}
    stage = OutputStage()
    try:
        config = _load_config(args.config)
        return args.handler(args, config, stage)
    except (CliError, ValueError, OSError) as exc:
        stage.abort()
        print(f"error: {exc}".splitlines()[0], file=sys.stderr)
        return 1
    finally:
        stage.release()


if __name__ == "__main__":
    sys.exit(main())
