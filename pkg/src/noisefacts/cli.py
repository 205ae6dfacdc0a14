"""Command-line entry point: ``noisefacts <subcommand> ...``.

Exit codes: 0 success, 2 usage or input error, 3 non-finite loss.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .corpus import (EOK, CorpusError, FactTriple, KnowledgeSet, RelationCatalog, build_vocab, ingest_kg,
                     ingest_narratives)
from .diffuser import (ContextDiffuser, DiffusionTrainConfig, GenerationConfig, NumericFailure, fact_examples,
                       train_diffuser)
from .embedder import Embedder, PretrainConfig, pretrain_embedder, reconstruction_rate
from .entitypipe import ClassifierTrainConfig, EntityPipeline, SequenceClassifier, train_entity_pipeline
from .evalmetrics import (ClassifierScorer, EmbedderVectors, PrecomputedScorer, SimilarityConfig,
                          TokenOverlapScorer, VectorTable, evaluate_suite, knowledge_type_proportions, nlg_scores,
                          novelty, webnlg_scores)
from .evalmetrics.clustering import auto_threshold_range
from .numkernel import ModelConfig
from .schedule import NoiseSchedule, sqrt_schedule

log = logging.getLogger("noisefacts")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
SEED_ENV = "NOISEFACTS_SEED"


class InputError(Exception):
    """Bad user input; reported and mapped to exit code 2."""


def _defaults(cls, drop=()) -> dict:
    return {k: v for k, v in asdict(cls()).items() if k not in drop}


@dataclass
class RunConfig:
    command: str = ""
    seed: int = 0
    paths: dict = field(default_factory=dict)
    model: dict = field(default_factory=lambda: {"d": 64, "n_layers": 2, "n_heads": 4, "d_ff": 256,
                                                 "max_slots": 16, "dropout": 0.1, "max_len": 256})
    schedule: dict = field(default_factory=lambda: {"T": 2000, "s": 1e-4, "amp": 1.0})
    pretrain: dict = field(default_factory=lambda: _defaults(PretrainConfig, ("seed",)))
    train: dict = field(default_factory=lambda: _defaults(DiffusionTrainConfig, ("seed",)))
    classifier: dict = field(default_factory=lambda: _defaults(ClassifierTrainConfig, ("seed",)))
    generation: dict = field(default_factory=lambda: {"inference_steps": None, "max_facts": None, "n_slots": None})
    metrics: dict = field(default_factory=lambda: {"geometry": "edit", "scorer": "overlap", "thresholds": "auto",
                                                   "novelty": False, "webnlg": False})

    def to_json(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """Short hash of everything that shapes results; the output location is excluded."""
        obj = self.to_json()
        obj["paths"] = {k: v for k, v in obj["paths"].items() if k != "out"}
        blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def merge(self, obj: dict) -> "RunConfig":
        """Overlay a (possibly partial) config dict; unknown keys are rejected."""
        out = copy.deepcopy(self)
        names = {f.name for f in fields(self)}
        for key, value in obj.items():
            if key not in names:
                raise InputError(f"unknown config key {key!r}")
            current = getattr(out, key)
            if isinstance(current, dict):
                if not isinstance(value, dict):
                    raise InputError(f"config key {key!r} must be an object")
                current.update(value)
            else:
                setattr(out, key, value)
        return out

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(vocab_size=vocab_size, **self.model)

    def noise_schedule(self) -> NoiseSchedule:
        return sqrt_schedule(int(self.schedule["T"]), float(self.schedule["s"]), float(self.schedule["amp"]))


def child_seed(base: int, role: str) -> int:
    """Deterministic 31-bit seed for a named stochastic consumer."""
    digest = hashlib.sha256(f"{base}:{role}".encode()).digest()
    return int.from_bytes(digest[:4], "little") & 0x7FFFFFFF


# -- argument plumbing ------------------------------------------------------------

# flag -> (section, key); None section means a top-level field
OVERRIDES = {
    "seed": (None, "seed"),
    "d": ("model", "d"), "n_layers": ("model", "n_layers"), "n_heads": ("model", "n_heads"),
    "d_ff": ("model", "d_ff"), "max_slots": ("model", "max_slots"), "dropout": ("model", "dropout"),
    "T": ("schedule", "T"), "s": ("schedule", "s"), "amp": ("schedule", "amp"),
    "epochs": ("pretrain", "epochs"), "pretrain_lr": ("pretrain", "lr"),
    "steps": ("train", "steps"), "lr": ("train", "lr"), "warmup": ("train", "warmup"),
    "batch_size": ("train", "batch_size"), "gamma": ("train", "gamma"), "adapt_every": ("train", "adapt_every"),
    "log_every": ("train", "log_every"), "classifier_steps": ("classifier", "steps"),
    "inference_steps": ("generation", "inference_steps"), "max_facts": ("generation", "max_facts"),
    "n_slots": ("generation", "n_slots"),
    "geometry": ("metrics", "geometry"), "scorer": ("metrics", "scorer"), "thresholds": ("metrics", "thresholds"),
    "novelty": ("metrics", "novelty"), "webnlg": ("metrics", "webnlg"),
}
PATH_FLAGS = ("kg", "narratives", "relations", "embedder", "model_dir", "out", "generations", "gold", "vectors",
              "reference_kg", "schedule_file")


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the JSON config file, then NOISEFACTS_SEED, then explicit flags."""
    cfg = RunConfig(command=args.command)
    if getattr(args, "config", None):
        try:
            cfg = cfg.merge(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as err:
            raise InputError(f"cannot read config {args.config}: {err}") from None
        cfg.command = args.command
    if os.environ.get(SEED_ENV):
        try:
            cfg.seed = int(os.environ[SEED_ENV])
        except ValueError:
            raise InputError(f"{SEED_ENV} must be an integer") from None
    for flag, (section, key) in OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is None:
            continue
        if section is None:
            setattr(cfg, key, value)
        else:
            getattr(cfg, section)[key] = value
    for flag in PATH_FLAGS:
        value = getattr(args, flag, None)
        if value is not None:
            cfg.paths[flag] = str(value)
    if getattr(args, "open_relations", False):
        cfg.paths["relations"] = "open"
    return cfg


def _path(cfg: RunConfig, key: str, required: bool = True) -> Path | None:
    value = cfg.paths.get(key)
    if value is None:
        if required:
            raise InputError(f"missing required path --{key.replace('_', '-')}")
        return None
    return Path(value)


def _existing(cfg: RunConfig, key: str, required: bool = True) -> Path | None:
    p = _path(cfg, key, required)
    if p is not None and not p.exists():
        raise InputError(f"{p} does not exist")
    return p


def _catalog(cfg: RunConfig) -> RelationCatalog:
    rel = cfg.paths.get("relations")
    if rel is None:
        return RelationCatalog.atomic()
    if rel == "open":
        return RelationCatalog.open()
    try:
        return RelationCatalog.load(rel)
    except (OSError, json.JSONDecodeError, KeyError) as err:
        raise InputError(f"cannot read relations {rel}: {err}") from None


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _save_run_config(directory: Path, cfg: RunConfig) -> None:
    _write_json(directory / "run_config.json", {"config_hash": cfg.digest(), **cfg.to_json()})


def _load_embedder(cfg: RunConfig) -> Embedder:
    path = _path(cfg, "embedder")
    if not (path / "manifest.json").exists():
        raise InputError(f"no embedder checkpoint at {path}")
    return Embedder.load(path)


# -- subcommands ------------------------------------------------------------------


def cmd_pretrain_embedder(cfg: RunConfig, args) -> int:
    catalog = _catalog(cfg)
    kg = ingest_kg(_existing(cfg, "kg"), catalog)
    samples = ingest_narratives(_existing(cfg, "narratives"), catalog) if cfg.paths.get("narratives") else []
    facts = list(dict.fromkeys(list(kg.facts) + [f for s in samples for f in s.gold]))
    for f in facts:
        if catalog.open_world:
            catalog.admit(f.relation)
    level = args.level
    items = facts if level == "fact" else list(dict.fromkeys([f.head for f in facts] + [f.tail for f in facts]))
    vocab = build_vocab(samples, KnowledgeSet(facts), 1, catalog)
    train = PretrainConfig(**cfg.pretrain, seed=child_seed(cfg.seed, "pretrain"))
    emb, history = pretrain_embedder(items, cfg.model_config(len(vocab)), vocab, catalog, level, train)
    out = _path(cfg, "out")
    emb.save(out)
    rate = reconstruction_rate(emb, items)
    report = {"config_hash": cfg.digest(), "level": level, "n_items": len(items), "vocab_size": len(vocab),
              "reconstruction_rate": rate, "eok_reconstructed": reconstruction_rate(emb, [EOK]) == 1.0,
              "initial_loss": history[0], "final_loss": history[-1], "dropped": dict(kg.dropped)}
    _write_json(out / "report.json", report)
    _save_run_config(out, cfg)
    print(json.dumps({k: report[k] for k in ("reconstruction_rate", "final_loss", "n_items")}, sort_keys=True))
    return EXIT_OK


def _write_loss_csv(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["step", "loss", "mse", "anchor"])
        writer.writeheader()
        for r in rows:
            writer.writerow({k: (r[k] if k == "step" else f"{r[k]:.8g}") for k in writer.fieldnames})


def cmd_train(cfg: RunConfig, args) -> int:
    emb = _load_embedder(cfg)
    samples = ingest_narratives(_existing(cfg, "narratives"), emb.catalog)
    out = _path(cfg, "out")
    out.mkdir(parents=True, exist_ok=True)
    model_cfg = cfg.model_config(len(emb.vocab))
    if model_cfg.d != emb.cfg.d:
        raise InputError(f"model d={model_cfg.d} differs from embedder d={emb.cfg.d}")
    sched = cfg.noise_schedule()
    sched_dir = out / "schedules"
    sched_dir.mkdir(exist_ok=True)
    mode = args.mode
    if mode == "fact":
        if emb.level != "fact":
            raise InputError("fact mode needs a fact-level embedder")
        train = DiffusionTrainConfig(**cfg.train, seed=child_seed(cfg.seed, "train.fact"))
        sched.dump(sched_dir / "step_0.json")
        model, history = train_diffuser(fact_examples(samples), emb, sched, model_cfg, train,
                                        lambda step, s: s.dump(sched_dir / f"step_{step}.json"))
        model.save(out / "diffuser", {"config_hash": cfg.digest(), "mode": "fact"})
        _write_loss_csv(out / "loss.csv", history.rows)
        summary = {"final_loss": history.rows[-1]["loss"], "anchor_init": history.rows[0]["anchor"],
                   "anchor_final": history.rows[-1]["anchor"]}
    else:
        if emb.level != "entity":
            raise InputError("entity mode needs an entity-level embedder")
        train = DiffusionTrainConfig(**cfg.train, seed=child_seed(cfg.seed, "train.entity"))
        clf = ClassifierTrainConfig(**cfg.classifier, seed=child_seed(cfg.seed, "train.relation"))
        sched.dump(sched_dir / "step_0.json")
        pipe, logs = train_entity_pipeline(samples, emb, sched, model_cfg, train, clf)
        pipe.save(out)
        for role, history in logs.items():
            _write_loss_csv(out / f"loss_{role}.csv", history.rows)
            for i, s in enumerate(history.schedules, 1):
                s.dump(sched_dir / f"{role}_step_{i * train.adapt_every}.json")
        (out / "pipeline.json").write_text(json.dumps({"config_hash": cfg.digest(), "mode": "entity"}) + "\n")
        summary = {role: h.rows[-1]["loss"] for role, h in logs.items()}
    _save_run_config(out, cfg)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _load_generator(cfg: RunConfig, emb: Embedder):
    model_dir = _existing(cfg, "model_dir")
    try:
        if (model_dir / "pipeline.json").exists():
            pipe = EntityPipeline.load(model_dir, emb)
            models = [pipe.heads, pipe.tails]
            kind = "entity"
        else:
            path = model_dir / "diffuser" if (model_dir / "diffuser").exists() else model_dir
            model, _ = ContextDiffuser.load(path)
            pipe, models, kind = model, [model], "fact"
    except (OSError, KeyError, json.JSONDecodeError) as err:
        raise InputError(f"cannot load model from {model_dir}: {err}") from None
    for m in models:
        if m.cfg.d != emb.cfg.d:
            raise InputError(f"checkpoint d={m.cfg.d} differs from embedder d={emb.cfg.d}")
    return kind, pipe


def cmd_generate(cfg: RunConfig, args) -> int:
    emb = _load_embedder(cfg)
    kind, model = _load_generator(cfg, emb)
    samples = ingest_narratives(_existing(cfg, "narratives"), emb.catalog)
    T = model.heads.sched.T if kind == "entity" else model.sched.T
    steps = cfg.generation["inference_steps"] or T
    if not 1 <= steps <= T:
        raise InputError(f"--inference-steps must be in 1..{T}")
    base = child_seed(cfg.seed, "generate")
    digest = cfg.digest()
    lines = []
    for i, s in enumerate(samples):
        gen_cfg = GenerationConfig(steps, cfg.generation["n_slots"], base + i, cfg.generation["max_facts"])
        record = {"context": s.context, "inference_steps": steps, "seed": gen_cfg.seed, "config_hash": digest}
        if kind == "fact":
            out = model.generate(s.context, emb, gen_cfg)
            record.update(facts=[f.to_json() for f in out.items], n_dropped=out.n_dropped)
        else:
            facts, extra = model.generate_fact_graph(s.context, gen_cfg)
            record.update(facts=[f.to_json() for f in facts], n_dropped=0, **extra)
        lines.append(json.dumps(record, sort_keys=True))
    out_path = _path(cfg, "out")
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text("".join(line + "\n" for line in lines))
    print(json.dumps({"contexts": len(lines), "inference_steps": steps, "mode": kind}))
    return EXIT_OK


def read_generations(path: Path) -> list[dict]:
    rows = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            obj["facts"] = [FactTriple.from_json(f) for f in obj["facts"]]
            obj["context"] = str(obj["context"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
            raise InputError(f"{path}:{lineno}: malformed generation record ({err})") from None
        rows.append(obj)
    return rows


def _aligned(gens: list[dict], samples) -> None:
    for i, (g, s) in enumerate(zip(gens, samples)):
        if " ".join(g["context"].split()) != " ".join(s.context.split()):
            raise InputError(f"generation/gold mismatch at context id {i}")
    if len(gens) != len(samples):
        raise InputError(f"generation/gold mismatch at context id {min(len(gens), len(samples))}: "
                         f"{len(gens)} generated vs {len(samples)} gold records")


def _check_hashes(gens: list[dict], force: bool) -> list[str]:
    hashes = sorted({g.get("config_hash", "") for g in gens})
    if len(hashes) > 1 and not force:
        raise InputError(f"generations mix config hashes {hashes}; pass --force to evaluate anyway")
    return hashes


def _scorer(cfg: RunConfig, catalog: RelationCatalog):
    spec = str(cfg.metrics["scorer"])
    if spec == "overlap":
        return TokenOverlapScorer()
    kind, _, arg = spec.partition(":")
    if not arg or not Path(arg).exists():
        raise InputError(f"scorer {spec!r}: expected overlap, precomputed:PATH or classifier:DIR")
    if kind == "precomputed":
        return PrecomputedScorer.load(arg, catalog)
    if kind == "classifier":
        return ClassifierScorer(SequenceClassifier.load(arg), catalog)
    raise InputError(f"unknown scorer kind {kind!r}")


def _provider(cfg: RunConfig, catalog: RelationCatalog):
    if cfg.paths.get("vectors"):
        return VectorTable.load(_existing(cfg, "vectors"), catalog)
    if cfg.paths.get("embedder"):
        emb = _load_embedder(cfg)
        if emb.level != "fact":
            raise InputError("embedding geometry needs a fact-level embedder")
        return EmbedderVectors(emb)
    return None


def _thresholds(spec):
    if spec in (None, "auto"):
        return "auto"
    if isinstance(spec, str):
        try:
            return [float(x) for x in spec.split(",") if x.strip()]
        except ValueError:
            raise InputError(f"bad threshold list {spec!r}") from None
    return [float(x) for x in spec]


def cmd_evaluate(cfg: RunConfig, args) -> int:
    catalog = _catalog(cfg)
    gens = read_generations(_existing(cfg, "generations"))
    samples = ingest_narratives(_existing(cfg, "gold"), catalog)
    _aligned(gens, samples)
    hashes = _check_hashes(gens, args.force)
    gen_sets = [g["facts"] for g in gens]
    gold_sets = [list(s.gold) for s in samples]
    contexts = [s.context for s in samples]
    scorer = _scorer(cfg, catalog)
    geometry = cfg.metrics["geometry"]
    names = ["edit", "embedding"] if geometry == "both" else [geometry]
    provider = _provider(cfg, catalog) if ("embedding" in names or cfg.metrics["novelty"]) else None
    if provider is None and ("embedding" in names or cfg.metrics["novelty"]):
        raise InputError("embedding geometry and novelty need --vectors or --embedder")
    sim_cfgs = [SimilarityConfig(name, catalog, provider if name == "embedding" else None, scorer) for name in names]
    report = evaluate_suite(gen_sets, gold_sets, contexts, sim_cfgs, _thresholds(cfg.metrics["thresholds"]))
    report.nlg = nlg_scores(gen_sets, gold_sets, catalog)
    report.knowledge_types = knowledge_type_proportions(gen_sets, catalog)
    if cfg.metrics["webnlg"]:
        report.webnlg = webnlg_scores(gen_sets, gold_sets)
    if cfg.metrics["novelty"]:
        emb_cfg = SimilarityConfig("embedding", catalog, provider, scorer)
        pool = [f for g in gold_sets for f in g]
        if cfg.paths.get("reference_kg"):
            pool += list(ingest_kg(_existing(cfg, "reference_kg"), catalog).facts)
        eps_list = auto_threshold_range(gold_sets, emb_cfg)
        report.novelty = novelty(gen_sets, pool, contexts, emb_cfg, float(np.median(eps_list)))
    report.meta = {"config_hash": cfg.digest(), "generation_config_hashes": hashes, "n_contexts": len(contexts)}
    out = _path(cfg, "out")
    _write_json(out / "report.json", report.to_json())
    (out / "report.md").write_text(report.to_markdown())
    _save_run_config(out, cfg)
    for name, block in report.geometries.items():
        c = block["corpus"]
        print(f"{name}: facts={c['n_facts']:.2f} clusters={c['n_clusters']:.2f} relevance={_fmt(c['relevance'])} "
              f"alignment={_fmt(c['alignment'])} ra_f1={_fmt(c['ra_f1'])}")
    return EXIT_OK


def _fmt(x) -> str:
    return "-" if x is None else f"{x:.4f}"


def cmd_webnlg_score(cfg: RunConfig, args) -> int:
    catalog = RelationCatalog.open()
    gens = read_generations(_existing(cfg, "generations"))
    samples = ingest_narratives(_existing(cfg, "gold"), catalog)
    _aligned(gens, samples)
    scores = webnlg_scores([g["facts"] for g in gens], [list(s.gold) for s in samples])
    summary = {k: scores[k] for k in ("exact", "partial", "strict")}
    if cfg.paths.get("out"):
        _write_json(_path(cfg, "out"), {"config_hash": cfg.digest(), **scores})
    print(json.dumps(summary, indent=1, sort_keys=True))
    return EXIT_OK


def cmd_inspect_schedule(cfg: RunConfig, args) -> int:
    if cfg.paths.get("schedule_file"):
        try:
            sched = NoiseSchedule.load(_existing(cfg, "schedule_file"))
        except (json.JSONDecodeError, KeyError, ValueError) as err:
            raise InputError(f"cannot read schedule: {err}") from None
    else:
        sched = cfg.noise_schedule()
    try:
        sched.check()
        status = "ok"
    except AssertionError as err:
        status = f"invalid: {err}"
    T = sched.T
    ts = sorted({int(x) for x in args.at.split(",")}) if args.at else sorted({0, 1, 2, T // 4, T // 2, T - 1, T})
    ab, beta = sched.alpha_bar, sched.betas
    print(f"T={T} s={sched.s} amp={sched.amp} positions={sched.positions} check={status}")
    print("t\t" + "\t".join(f"alpha_bar[{n}]\tbeta[{n}]" for n in range(sched.positions)))
    for t in ts:
        if 0 <= t <= T:
            print(f"{t}\t" + "\t".join(f"{ab[t, n]:.6g}\t{beta[t, n]:.6g}" for n in range(sched.positions)))
    return EXIT_OK if status == "ok" else EXIT_INPUT


COMMANDS = {
    "pretrain-embedder": cmd_pretrain_embedder,
    "train": cmd_train,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "webnlg-score": cmd_webnlg_score,
    "inspect-schedule": cmd_inspect_schedule,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noisefacts", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *paths):
        p.add_argument("--config", help="JSON run config; flags override it")
        p.add_argument("--seed", type=int)
        for name in paths:
            p.add_argument(f"--{name.replace('_', '-')}", dest=name)

    def model_flags(p):
        for name, typ in (("d", int), ("n_layers", int), ("n_heads", int), ("d_ff", int), ("max_slots", int),
                          ("dropout", float)):
            p.add_argument(f"--{name.replace('_', '-')}", type=typ, dest=name)

    p = sub.add_parser("pretrain-embedder", help="fit the fact or entity embedder by reconstruction")
    common(p, "kg", "narratives", "relations", "out")
    p.add_argument("--open-relations", action="store_true", help="admit any relation label (RDF predicates)")
    p.add_argument("--level", choices=("fact", "entity"), default="fact")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float, dest="pretrain_lr")
    model_flags(p)

    p = sub.add_parser("train", help="train a fact diffuser or the entity pipeline")
    common(p, "narratives", "embedder", "out")
    p.add_argument("--mode", choices=("fact", "entity"), default="fact")
    for name, typ in (("steps", int), ("lr", float), ("warmup", int), ("batch_size", int), ("gamma", float),
                      ("adapt_every", int), ("log_every", int), ("classifier_steps", int), ("T", int),
                      ("s", float), ("amp", float)):
        p.add_argument(f"--{name.replace('_', '-')}", type=typ, dest=name)
    model_flags(p)

    p = sub.add_parser("generate", help="generate fact sets for narratives")
    common(p, "narratives", "embedder", "out")
    p.add_argument("--model", dest="model_dir", required=False)
    p.add_argument("--steps", "--inference-steps", type=int, dest="inference_steps")
    p.add_argument("--max-facts", type=int, dest="max_facts")
    p.add_argument("--n-slots", type=int, dest="n_slots")

    p = sub.add_parser("evaluate", help="score generations against gold narratives")
    common(p, "generations", "gold", "relations", "embedder", "vectors", "reference_kg", "out")
    p.add_argument("--open-relations", action="store_true")
    p.add_argument("--geometry", choices=("edit", "embedding", "both"))
    p.add_argument("--scorer", help="overlap | precomputed:scores.jsonl | classifier:DIR")
    p.add_argument("--thresholds", help="'auto' or comma-separated values")
    p.add_argument("--novelty", action="store_true", default=None)
    p.add_argument("--webnlg", action="store_true", default=None)
    p.add_argument("--force", action="store_true", help="accept generations with mixed config hashes")

    p = sub.add_parser("webnlg-score", help="exact/partial/strict triple matching scores")
    common(p, "generations", "gold", "out")

    p = sub.add_parser("inspect-schedule", help="print alpha_bar/beta rows of a schedule")
    common(p)
    p.add_argument("--schedule", dest="schedule_file", help="schedule dump JSON (default: fresh sqrt schedule)")
    p.add_argument("--T", type=int, dest="T")
    p.add_argument("--s", type=float, dest="s")
    p.add_argument("--amp", type=float, dest="amp")
    p.add_argument("--at", help="comma-separated steps to print")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except NumericFailure as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, CorpusError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
