"""Command-line front end.

    mlane train --graph g.edges --labels g.labels --task classification
    mlane evaluate --embeddings runs/x/embeddings.txt --graph g.edges --task linkpred
    mlane sample --graph g.edges --policy runs/x/policy.json
    mlane inspect-policy --graph g.edges --policy runs/x/policy.json

Settings resolve as: command-line flags, then ``--config`` JSON, then the
per-task defaults.  Every file a command writes lands in its output
directory (``--output``, or a folder under ``$MLANE_OUTPUT_ROOT``).
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
import time
from importlib import metadata as _metadata

import numpy as np

from . import meta as _meta
from .graph import EdgeListError, Graph, read_edge_list
from .policy import POLICY_FORMAT_VERSION, PolicyDivergence, init_policy, load_policy, save_policy
from .skipgram import SkipGramDivergence, export_embeddings, read_embeddings, train_skipgram
from .tasks import (
    SplitError,
    eval_classification,
    eval_clustering,
    eval_link_prediction,
    make_task,
    read_labels,
)
from .tasks.evaluate import REPORT_FORMAT_VERSION
from .walker import action_profile, baseline_corpus, sample_corpus, write_corpus, write_trajectories

log = logging.getLogger("mlane")

MANIFEST_FORMAT_VERSION = 1
EMBEDDING_FORMAT_VERSION = 1
TASKS = ("classification", "linkpred", "clustering")
OUTPUT_ENV = "MLANE_OUTPUT_ROOT"

# config-file keys understood besides the MetaConfig fields
RUN_KEYS = {"task", "profile", "baseline", "p", "q", "ks", "seed", "strict"}
META_FIELDS = {f.name for f in dataclasses.fields(_meta.MetaConfig)}


class UsageError(Exception):
    pass


def _version() -> str:
    try:
        return _metadata.version("artifact")
    except _metadata.PackageNotFoundError:
        return "unknown"


def _digest(path) -> str:
    h = hashlib.blake2b(digest_size=16)
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _ks(text: str) -> list[int]:
    try:
        ks = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError("ks must be positive integers")
    return ks


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--graph", help="edge list, one 'u v' pair per line")
    p.add_argument("--output", help=f"output directory (default: under ${OUTPUT_ENV} or ./runs)")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--threads", type=int, help="cap on worker threads")
    p.add_argument("--deterministic", action="store_true",
                   help="single-threaded SkipGram and no timings in reports")
    p.add_argument("-v", "--verbose", action="store_true")


def _task_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--task", choices=TASKS)
    p.add_argument("--labels", help="label file, 'node class[,class...]' per line")
    p.add_argument("--ks", type=_ks, help="precision@k cut-offs, e.g. 10,100")
    p.add_argument("--strict", action="store_true", default=None,
                   help="reward on the test split as well (no validation hold-out)")


def _walk_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-walks", type=int, help="walks per node (K)")
    p.add_argument("--walk-length", type=int, help="steps per walk (L)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mlane", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    sub = parser.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="learn embeddings (and a walk policy)")
    _common(tr)
    _task_flags(tr)
    _walk_flags(tr)
    tr.add_argument("--config", help="JSON file with default settings")
    tr.add_argument("--profile", help="hyperparameter profile, e.g. 'amazon'")
    tr.add_argument("--baseline", choices=("mlane", "uniform", "pq"),
                    help="walk strategy; uniform and pq skip the policy search")
    tr.add_argument("--p", type=_positive_float, help="return parameter for --baseline pq")
    tr.add_argument("--q", type=_positive_float, help="in-out parameter for --baseline pq")
    tr.add_argument("--dim", type=int)
    tr.add_argument("--window", type=int)
    tr.add_argument("--alpha", type=float, help="policy learning rate")
    tr.add_argument("--max-iter", type=int)
    tr.add_argument("--epochs", dest="sg_epochs", type=int, help="SkipGram epochs")
    tr.add_argument("--episodes", type=int, help="corpora per meta-iteration")
    tr.add_argument("--reward-baseline", dest="reward_baseline", action="store_true",
                    default=None, help="centre rewards with a running baseline")
    tr.add_argument("--checkpoint-embeddings", action="store_true",
                    help="also write embeddings into each checkpoint")

    ev = sub.add_parser("evaluate", help="score an embedding file")
    _common(ev)
    _task_flags(ev)
    ev.add_argument("--embeddings", help="word2vec text file")
    ev.add_argument("--on", choices=("test", "validation"), default="test")
    ev.add_argument("--clusters", type=int, help="k for clustering (default: class count)")

    sa = sub.add_parser("sample", help="dump a walk corpus")
    _common(sa)
    _walk_flags(sa)
    sa.add_argument("--policy", help="policy JSON; omitted means an untrained policy")
    sa.add_argument("--baseline", choices=("mlane", "uniform", "pq"), default="mlane")
    sa.add_argument("--p", type=_positive_float, default=1.0)
    sa.add_argument("--q", type=_positive_float, default=1.0)

    ip = sub.add_parser("inspect-policy", help="per-node mean action probabilities")
    _common(ip)
    _walk_flags(ip)
    ip.add_argument("--policy", help="policy JSON")
    return parser


# -- settings -----------------------------------------------------------------

def _load_config(path) -> dict:
    if path is None:
        return {}
    if not os.path.isfile(path):
        raise UsageError(f"--config: no such file: {path}")
    try:
        data = _meta.load_config(path)
    except (ValueError, json.JSONDecodeError) as exc:
        raise UsageError(f"--config: {exc}")
    unknown = set(data) - META_FIELDS - RUN_KEYS
    if unknown:
        raise UsageError(f"--config: unknown keys {sorted(unknown)}")
    return data


def _resolve_train(args) -> tuple[dict, _meta.MetaConfig]:
    file_cfg = _load_config(args.config)

    def pick(name, default=None):
        v = getattr(args, name, None)
        if v is not None:
            return v
        return file_cfg.get(name, default)

    run = {
        "task": pick("task"),
        "profile": pick("profile", "default"),
        "baseline": pick("baseline", "mlane"),
        "p": pick("p", 1.0),
        "q": pick("q", 1.0),
        "ks": list(pick("ks", [10, 100])),
        "seed": int(pick("seed", 0)),
        "strict": bool(pick("strict", False)),
    }
    if run["task"] is None:
        raise UsageError("--task is required (classification, linkpred or clustering)")
    if run["task"] not in TASKS:
        raise UsageError(f"--task: unknown task {run['task']!r}")
    if run["baseline"] not in ("mlane", "uniform", "pq"):
        raise UsageError(f"--baseline: unknown strategy {run['baseline']!r}")
    if run["baseline"] != "pq" and (args.p is not None or args.q is not None):
        raise UsageError("--p/--q only apply to --baseline pq")
    table_task = run["task"]
    try:
        cfg = _meta.MetaConfig.for_task(table_task, run["profile"])
    except ValueError as exc:
        raise UsageError(f"--profile: {exc}")
    overrides = {k: v for k, v in file_cfg.items() if k in META_FIELDS}
    flag_map = {"n_walks": "n_walks", "walk_length": "walk_length", "dim": "dim",
                "window": "window", "alpha": "alpha", "max_iter": "max_iter",
                "sg_epochs": "sg_epochs", "episodes": "episodes", "reward_baseline": "baseline"}
    for attr, field_name in flag_map.items():
        v = getattr(args, attr, None)
        if v is not None:
            overrides[field_name] = v
    overrides["seed"] = run["seed"]
    overrides["sg_parallel"] = _parallel(args)
    try:
        cfg = dataclasses.replace(cfg, **overrides)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid setting: {exc}")
    return run, cfg


def _parallel(args) -> bool:
    if args.deterministic:
        return False
    return args.threads is None or args.threads > 1


def _require_file(value, flag: str, why: str = "") -> str:
    if value is None:
        raise UsageError(f"{flag} is required{why}")
    if not os.path.isfile(value):
        raise UsageError(f"{flag}: no such file: {value}")
    return value


def _output_dir(args, name: str) -> str:
    out = args.output
    if out is None:
        root = os.environ.get(OUTPUT_ENV, "runs")
        out = os.path.join(root, name)
    os.makedirs(out, exist_ok=True)
    return out


def _set_threads(args) -> None:
    if args.threads is None and not args.deterministic:
        return
    import numba

    n = 1 if args.deterministic else args.threads
    if n < 1:
        raise UsageError("--threads must be >= 1")
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _load_graph(args) -> Graph:
    return read_edge_list(_require_file(args.graph, "--graph"))


def _load_labels(args, g: Graph, task: str):
    if task in ("classification", "clustering"):
        path = _require_file(args.labels, "--labels", f" for --task {task}")
        return read_labels(path, g)
    if args.labels is not None:
        _require_file(args.labels, "--labels")
        return read_labels(args.labels, g)
    return None


def _inputs(args, *flags) -> dict:
    out = {}
    for flag in flags:
        path = getattr(args, flag, None)
        if path is not None:
            out[flag] = {"path": os.path.abspath(path), "blake2b": _digest(path)}
    return out


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _manifest(args, command: str, settings: dict, inputs: dict, extra: dict | None = None) -> dict:
    m = {
        "command": command,
        "argv": getattr(args, "argv", sys.argv[1:]),
        "package_version": _version(),
        "settings": settings,
        "inputs": inputs,
        "deterministic": bool(args.deterministic),
        "threads": args.threads,
        "format_versions": {"manifest": MANIFEST_FORMAT_VERSION, "report": REPORT_FORMAT_VERSION,
                            "trace": _meta.TRACE_FORMAT_VERSION, "policy": POLICY_FORMAT_VERSION,
                            "embeddings": EMBEDDING_FORMAT_VERSION},
    }
    if extra:
        m.update(extra)
    return m


# -- commands -----------------------------------------------------------------

def cmd_train(args) -> int:
    run, cfg = _resolve_train(args)
    g = _load_graph(args)
    labels = _load_labels(args, g, run["task"])
    _set_threads(args)
    out = _output_dir(args, f"train-{run['task']}-{run['baseline']}-seed{run['seed']}")
    timing = not args.deterministic
    task = make_task(run["task"], g, labels, run["seed"], ks=run["ks"], strict=run["strict"])
    task.split.save(os.path.join(out, "split.json"))
    eg = task.embedding_graph(g)
    extra = {"seeds": {"master": run["seed"], "split": run["seed"], "policy_init": cfg.seed}}
    if run["baseline"] == "mlane":
        ckpt = os.path.join(out, "checkpoints")
        os.makedirs(ckpt, exist_ok=True)
        try:
            result = _meta.run_mlane(g, task, cfg, checkpoint_dir=ckpt,
                                     checkpoint_embeddings=args.checkpoint_embeddings,
                                     timing=timing)
        except _meta.MetaLoopAborted as exc:
            save_policy(exc.last_good, os.path.join(out, "last_good_policy.json"))
            raise
        emb = result.embeddings
        save_policy(result.policy, os.path.join(out, "policy.json"))
        save_policy(result.best_policy, os.path.join(out, "best_policy.json"))
        result.trace.write_csv(os.path.join(out, "trace.csv"))
        extra["best_iteration"] = result.best_iteration
        extra["best_reward"] = result.best_report.reward
        extra["iterations"] = len(result.trace)
        extra["converged"] = result.converged
        corpus_stats = result.trace.records[result.best_iteration - 1].corpus
    else:
        p, q = (run["p"], run["q"]) if run["baseline"] == "pq" else (1.0, 1.0)
        walk_seed = _meta.derive_seed(cfg.seed, 0, 0, 0)
        sg_seed = _meta.derive_seed(cfg.seed, 0, 0, 1)
        corpus = baseline_corpus(eg, cfg.n_walks, cfg.walk_length, walk_seed, p, q)
        emb = train_skipgram(corpus, cfg.skipgram(sg_seed), n=eg.n)
        corpus_stats = corpus.stats()
        extra["seeds"].update({"walks": walk_seed, "skipgram": sg_seed})
    report = task.report(emb)
    with open(os.path.join(out, "report.json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json(timing) + "\n")
    sidecar = {"format_version": EMBEDDING_FORMAT_VERSION, "task": run["task"],
               "baseline": run["baseline"], "seed": run["seed"], "dim": cfg.dim,
               "config": _meta.config_dict(cfg), "corpus": corpus_stats}
    export_embeddings(emb, g.labels, os.path.join(out, "embeddings.txt"), sidecar)
    settings = {**run, "meta": _meta.config_dict(cfg)}
    _write_json(os.path.join(out, "manifest.json"),
                _manifest(args, "train", settings, _inputs(args, "graph", "labels", "config"), extra))
    print(report.to_json(timing))
    log.info("wrote %s", out)
    return 0


def _align_embeddings(path, g: Graph) -> np.ndarray:
    names, z = read_embeddings(path)
    pos = {lab: i for i, lab in enumerate(names)}
    missing = [lab for lab in g.labels if lab not in pos]
    if missing:
        shown = ", ".join(missing[:20])
        more = f" (and {len(missing) - 20} more)" if len(missing) > 20 else ""
        raise ValueError(f"embedding file lacks {len(missing)} graph node(s): {shown}{more}")
    return z[[pos[lab] for lab in g.labels]]


def cmd_evaluate(args) -> int:
    if args.task is None:
        raise UsageError("--task is required (classification, linkpred or clustering)")
    emb_path = _require_file(args.embeddings, "--embeddings")
    g = _load_graph(args)
    labels = _load_labels(args, g, args.task)
    seed = 0 if args.seed is None else args.seed
    ks = args.ks or [10, 100]
    out = _output_dir(args, f"evaluate-{args.task}-seed{seed}")
    z = _align_embeddings(emb_path, g)
    task = make_task(args.task, g, labels, seed, ks=ks)
    if args.task == "classification":
        report = eval_classification(z, labels, task.split, args.on)
    elif args.task == "linkpred":
        report = eval_link_prediction(z, task.split, ks, args.on)
    else:
        k = args.clusters or labels.n_classes
        split = None if args.strict else task.split
        report = eval_clustering(z, labels, k, seed, split, args.on)
    timing = not args.deterministic
    text = report.to_json(timing)
    task.split.save(os.path.join(out, "split.json"))
    with open(os.path.join(out, "report.json"), "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    settings = {"task": args.task, "seed": seed, "ks": ks, "on": args.on,
                "strict": bool(args.strict)}
    _write_json(os.path.join(out, "manifest.json"),
                _manifest(args, "evaluate", settings, _inputs(args, "graph", "labels", "embeddings")))
    print(text)
    return 0


def _policy_for(args, g: Graph, seed: int):
    if args.policy is None:
        return init_policy(g.n, seed)
    theta = load_policy(_require_file(args.policy, "--policy"))
    if theta.n != g.n:
        raise ValueError(f"policy was trained on {theta.n} nodes, graph has {g.n}")
    return theta


def _walk_settings(args) -> tuple[int, int, int]:
    seed = 0 if args.seed is None else args.seed
    k = args.n_walks or _meta.TASK_DEFAULTS[("classification", "default")]["n_walks"]
    length = args.walk_length or _meta.TASK_DEFAULTS[("classification", "default")]["walk_length"]
    if k < 1 or length < 1:
        raise UsageError("--n-walks and --walk-length must be >= 1")
    return seed, k, length


def cmd_sample(args) -> int:
    seed, k, length = _walk_settings(args)
    g = _load_graph(args)
    if args.baseline != "pq" and (args.p != 1.0 or args.q != 1.0):
        raise UsageError("--p/--q only apply to --baseline pq")
    if args.baseline != "mlane" and args.policy is not None:
        raise UsageError("--policy only applies to --baseline mlane")
    _set_threads(args)
    out = _output_dir(args, f"sample-{args.baseline}-seed{seed}")
    if args.baseline == "mlane":
        theta = _policy_for(args, g, seed)
        corpus = sample_corpus(g, theta, k, length, seed)
        write_trajectories(corpus, g, os.path.join(out, "trajectories.jsonl"))
    else:
        p, q = (args.p, args.q) if args.baseline == "pq" else (1.0, 1.0)
        corpus = baseline_corpus(g, k, length, seed, p, q)
    write_corpus(corpus, g, os.path.join(out, "corpus.txt"))
    stats = corpus.stats()
    settings = {"baseline": args.baseline, "seed": seed, "n_walks": k, "walk_length": length,
                "p": args.p, "q": args.q}
    _write_json(os.path.join(out, "manifest.json"),
                _manifest(args, "sample", settings, _inputs(args, "graph", "policy"),
                          {"corpus": stats}))
    print(json.dumps(stats, sort_keys=True, default=_jsonable))
    return 0


def cmd_inspect_policy(args) -> int:
    seed, k, length = _walk_settings(args)
    g = _load_graph(args)
    _require_file(args.policy, "--policy")
    _set_threads(args)
    theta = _policy_for(args, g, seed)
    out = _output_dir(args, f"inspect-seed{seed}")
    corpus = sample_corpus(g, theta, k, length, seed)
    prof = action_profile(corpus, theta)
    nodes = {}
    for v, lab in enumerate(g.labels):
        pf, ps, pb = (None if np.isnan(x) else float(x) for x in prof["policy"][v])
        rf, rs, rb = (None if np.isnan(x) else float(x) for x in prof["realized"][v])
        nodes[lab] = {"p_f": pf, "p_s": ps, "p_b": pb,
                      "bfs": None if ps is None else ps + pb,
                      "realized": {"f": rf, "s": rs, "b": rb}, "steps": int(prof["steps"][v])}
    doc = {"format_version": 1, "policy_fingerprint": theta.fingerprint(), "n_walks": k,
           "walk_length": length, "seed": seed, "nodes": nodes}
    text = json.dumps(doc, indent=2, sort_keys=True)
    with open(os.path.join(out, "policy_profile.json"), "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    settings = {"seed": seed, "n_walks": k, "walk_length": length}
    _write_json(os.path.join(out, "manifest.json"),
                _manifest(args, "inspect-policy", settings, _inputs(args, "graph", "policy")))
    print(text)
    return 0


COMMANDS = {"train": cmd_train, "evaluate": cmd_evaluate, "sample": cmd_sample,
            "inspect-policy": cmd_inspect_policy}

RUNTIME_ERRORS = (EdgeListError, SplitError, _meta.MetaLoopAborted, PolicyDivergence,
                  SkipGramDivergence, ValueError, OSError)


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        code = COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mlane {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except RUNTIME_ERRORS as exc:
        print(f"mlane {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        if isinstance(exc, _meta.MetaLoopAborted):
            print(f"  last good policy: iteration {exc.iteration}", file=sys.stderr)
        return 1
    log.info("%s finished in %.1fs", args.command, time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
