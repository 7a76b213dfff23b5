"""Command-line pipeline: tree validation, synthetic data, simulated 3AFC
annotation, SRN training, episodic evaluation, and the desk-scale
end-to-end reproduction run.

Exit codes: 0 success, 2 validation error, 3 runtime error. Flags override
config-file keys, which override built-in defaults.
"""

from __future__ import annotations

import functools
import math
import os
import sys

import click
import numpy as np

from . import annotation, data, embedding, episodes, hierarchy


def _read_config(path: str | None) -> dict[str, str]:
    cfg: dict[str, str] = {}
    if not path:
        return cfg
    with open(path, encoding="utf-8") as f:
        for raw in f:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"bad config line {line!r} (expected key=value)")
            k, v = line.split("=", 1)
            cfg[k.strip()] = v.strip()
    return cfg


def _resolve(flag, cfg: dict[str, str], key: str, default, cast=str):
    if flag is not None:
        return flag
    if key in cfg:
        return cast(cfg[key])
    return default


def _fail_cleanly(fn):
    """Map validation errors to exit 2, anything else to exit 3."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ValueError, FileNotFoundError, KeyError) as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(2)
        except Exception as e:  # noqa: BLE001
            click.echo(f"runtime error: {e}", err=True)
            sys.exit(3)

    return wrapper


@click.group()
def main():
    """Semantic few-shot learning pipeline."""


@main.command("validate-tree")
@click.option("--tree", "tree_path", type=click.Path(exists=True), required=True)
@_fail_cleanly
def validate_tree(tree_path):
    """Validate a tree file and print its layer structure."""
    with open(tree_path, encoding="utf-8") as f:
        tree = hierarchy.load_tree(f.read())
    by_depth: dict[int, int] = {}
    for n in tree.nodes:
        by_depth[tree.depth(n)] = by_depth.get(tree.depth(n), 0) + 1
    layers = "/".join(str(by_depth[d]) for d in sorted(by_depth) if d > 0)
    click.echo(f"ok: {len(tree)} nodes, height {tree.height(tree.root)}, layers {layers}")


@main.command("gen-synth")
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--seed", type=int)
@click.option("--tree", "tree_path", required=True)
@click.option("--features", "features_path", required=True)
@_fail_cleanly
def gen_synth(config_path, seed, tree_path, features_path):
    """Generate a seeded synthetic hierarchical dataset."""
    cfg = _read_config(config_path)
    synth = _synth_config(cfg, seed)
    tree, store = data.generate_synthetic(synth)
    _write_tree(tree, tree_path)
    with open(features_path, "w", encoding="utf-8") as f:
        f.write(data.save_features(store))
    click.echo(
        f"wrote {tree_path} ({len(tree)} nodes) and {features_path} ({len(store)} samples)"
    )


def _synth_config(cfg: dict[str, str], seed: int | None) -> data.SynthConfig:
    kwargs = {}
    for key, cast in [
        ("dim", int),
        ("sigma_super", float),
        ("sigma_mid", float),
        ("sigma_leaf", float),
        ("sigma_obs", float),
        ("samples_per_leaf", int),
        ("base_fraction", float),
    ]:
        if key in cfg:
            kwargs[key] = cast(cfg[key])
    if "branching" in cfg:
        kwargs["branching"] = tuple(int(x) for x in cfg["branching"].split("x"))
    kwargs["seed"] = _resolve(seed, cfg, "seed", 0, int)
    return data.SynthConfig(**kwargs)


def _train_config(cfg: dict[str, str], seed, margin, lr, epochs) -> embedding.TrainConfig:
    kwargs = {}
    for key, cast in [
        ("momentum", float),
        ("decay", float),
        ("batch_size", int),
        ("hidden", int),
        ("out", int),
    ]:
        if key in cfg:
            kwargs[key] = cast(cfg[key])
    kwargs["margin"] = _resolve(margin, cfg, "margin", 0.4, float)
    kwargs["lr"] = _resolve(lr, cfg, "lr", 0.001, float)
    kwargs["epochs"] = _resolve(epochs, cfg, "epochs", 15, int)
    kwargs["seed"] = _resolve(seed, cfg, "seed", 0, int)
    return embedding.TrainConfig(**kwargs)


def _write_tree(tree: hierarchy.ConceptTree, path: str):
    lines = []
    order = sorted(tree.nodes, key=lambda n: (tree.depth(n), n))
    for n in order:
        p = tree.parent(n)
        lines.append(f"{n}\t{p if p is not None else 'ROOT'}\t{tree.label(n)}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def _load_tree_file(path: str) -> hierarchy.ConceptTree:
    with open(path, encoding="utf-8") as f:
        return hierarchy.load_tree(f.read())


def _load_store(path: str) -> data.FeatureStore:
    with open(path, encoding="utf-8") as f:
        return data.load_features(f.read())


@main.command("simulate-tests")
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--seed", type=int)
@click.option("--tree", "tree_path", type=click.Path(exists=True), required=True)
@click.option("--features", "features_path", type=click.Path(exists=True), required=True)
@click.option("--answers", "answers_path", required=True)
@click.option("--count", type=int)
@click.option("--policy", type=click.Choice(["discard", "tiebreak-lowest-index"]))
@_fail_cleanly
def simulate_tests(config_path, seed, tree_path, features_path, answers_path, count, policy):
    """Sample 3AFC tests and answer them with the virtual annotator."""
    cfg = _read_config(config_path)
    seed = _resolve(seed, cfg, "seed", 0, int)
    count = _resolve(count, cfg, "count", 1000, int)
    policy = _resolve(policy, cfg, "policy", "discard")
    tree = _load_tree_file(tree_path)
    store = _load_store(features_path)
    rng = np.random.default_rng(seed)
    base = store.sample_ids("base")
    tests = annotation.sample_tests(base, count, rng)
    answers = annotation.simulate_annotations(
        tests, tree, store.leaf_of, policy=policy, pool=base, rng=rng
    )
    if os.path.exists(answers_path):
        os.remove(answers_path)  # fresh log so reruns are byte-identical
    log = annotation.AnswerLog(answers_path)
    for a in answers:
        log.append(a)
    click.echo(f"wrote {len(answers)} answers to {answers_path}")


@main.command("train")
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--seed", type=int)
@click.option("--features", "features_path", type=click.Path(exists=True), required=True)
@click.option("--answers", "answers_path", type=click.Path(exists=True), required=True)
@click.option("--checkpoint", "ckpt_path", required=True)
@click.option("--margin", type=float)
@click.option("--lr", type=float)
@click.option("--epochs", type=int)
@_fail_cleanly
def train(config_path, seed, features_path, answers_path, ckpt_path, margin, lr, epochs):
    """Fine-tune the embedding head on an answer log."""
    cfg = _read_config(config_path)
    tcfg = _train_config(cfg, seed, margin, lr, epochs)
    store = _load_store(features_path)
    log = annotation.AnswerLog(answers_path)
    history: list[float] = []
    head = embedding.train_srn(store, log.answers, tcfg, loss_history=history)
    with open(ckpt_path, "w", encoding="utf-8") as f:
        f.write(embedding.save_head(head, tcfg))
    click.echo(
        f"trained on {len(log)} answers: loss {history[0]:.6f} -> {history[-1]:.6f}; "
        f"checkpoint {ckpt_path}"
    )


@main.command("eval")
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--seed", type=int)
@click.option("--tree", "tree_path", type=click.Path(exists=True), required=True)
@click.option("--features", "features_path", type=click.Path(exists=True), required=True)
@click.option("--checkpoint", "ckpt_path", type=click.Path(exists=True), required=True)
@click.option("--report", "report_path", required=True)
@click.option("--n-way", type=int)
@click.option("--episodes", "episode_count", type=int)
@click.option("--annotations", "annotation_budget", type=int, default=0)
@_fail_cleanly
def eval_cmd(config_path, seed, tree_path, features_path, ckpt_path, report_path,
             n_way, episode_count, annotation_budget):
    """Evaluate semantic and typical episodes; write a report."""
    cfg = _read_config(config_path)
    seed = _resolve(seed, cfg, "seed", 0, int)
    n_way = _resolve(n_way, cfg, "n_way", 5, int)
    episode_count = _resolve(episode_count, cfg, "episodes", 2000, int)
    tree = _load_tree_file(tree_path)
    store = _load_store(features_path)
    with open(ckpt_path, encoding="utf-8") as f:
        head = embedding.load_head(f.read())
    text = _evaluate(tree, store, head, n_way, episode_count, seed, annotation_budget)
    with open(report_path, "w", encoding="utf-8") as f:
        f.write(text)
    click.echo(text, nl=False)


def _evaluate(tree, store, head, n_way, episode_count, seed, annotation_budget) -> str:
    econf = {"n_way": n_way, "episodes": episode_count}
    rng = np.random.default_rng(seed)
    sem_eps = [episodes.sample_semantic_task(store, n_way, rng) for _ in range(episode_count)]
    rng = np.random.default_rng(seed + 1)
    typ_eps = [episodes.sample_typical_task(store, n_way, 1, rng) for _ in range(episode_count)]

    def run(eps, infer):
        results = [infer(ep) for ep in eps]
        choices = [c for c, _ in results]
        ties = sum(t for _, t in results)
        return episodes.score(
            eps, choices, tree, store, tie_count=ties,
            annotation_budget=annotation_budget, seed=seed, config=econf,
        )

    sem_raw = run(sem_eps, lambda ep: episodes.infer_nn_raw(ep, store))
    sem_srn = run(sem_eps, lambda ep: episodes.infer_nn(ep, head, store))
    typ_raw = run(typ_eps, lambda ep: episodes.infer_nn_raw(ep, store))
    typ_srn = run(typ_eps, lambda ep: episodes.infer_nn(ep, head, store))
    proto_leaves = [episodes.infer_prototype(ep, head, store) for ep in typ_eps]
    proto_choices = [
        next(i for i, s in enumerate(ep.support) if store.leaf_of[s] == leaf)
        for ep, leaf in zip(typ_eps, proto_leaves)
    ]
    typ_proto = episodes.score(
        typ_eps, proto_choices, tree, store,
        annotation_budget=annotation_budget, seed=seed, config=econf,
    )

    def pct(x):
        return f"{100 * x:.2f}"

    table = episodes.render_table(
        [
            {
                "method": "untuned-features NN",
                "supervision": "none",
                "annotations": "0",
                "typical_acc": pct(typ_raw.typical_accuracy),
                "semantic_acc": pct(sem_raw.semantic_accuracy),
            },
            {
                "method": "prototype (trained emb.)",
                "supervision": "labels at eval",
                "annotations": "0",
                "typical_acc": pct(typ_proto.typical_accuracy),
                "semantic_acc": "-",
            },
            {
                "method": "SRN NN (ours)",
                "supervision": "3AFC psychometric",
                "annotations": str(annotation_budget),
                "typical_acc": pct(typ_srn.typical_accuracy),
                "semantic_acc": pct(sem_srn.semantic_accuracy),
            },
        ]
    )
    parts = [
        "# semantic episodes, untuned baseline",
        sem_raw.to_text(),
        "# semantic episodes, trained SRN",
        sem_srn.to_text(),
        "# typical episodes, untuned baseline",
        typ_raw.to_text(),
        "# typical episodes, trained SRN",
        typ_srn.to_text(),
        "# comparison",
        table,
    ]
    return "\n".join(parts)


@main.command("export-embeddings")
@click.option("--features", "features_path", type=click.Path(exists=True), required=True)
@click.option("--checkpoint", "ckpt_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", required=True)
@_fail_cleanly
def export_embeddings(features_path, ckpt_path, out_path):
    """One row per novel sample: id, leaf, unit-norm embedding."""
    store = _load_store(features_path)
    with open(ckpt_path, encoding="utf-8") as f:
        head = embedding.load_head(f.read())
    ids = store.sample_ids("novel")
    U, _ = embedding.forward(head, store.matrix(ids))
    with open(out_path, "w", encoding="utf-8") as f:
        for sid, u in zip(ids, U):
            vals = ",".join(repr(float(x)) for x in u)
            f.write(f"{sid},{store.leaf_of[sid]},{vals}\n")
    click.echo(f"wrote {len(ids)} embeddings to {out_path}")


@main.command("serve")
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--tree", "tree_path", type=click.Path(exists=True), required=True)
@click.option("--features", "features_path", type=click.Path(exists=True), required=True)
@click.option("--answers", "answers_path", required=True)
@click.option("--seed", type=int)
@click.option("--count", type=int)
@click.option("--port", type=int)
@click.option("--static-dir", type=click.Path(exists=True))
@_fail_cleanly
def serve(config_path, tree_path, features_path, answers_path, seed, count, port, static_dir):
    """Run the human-annotation HTTP service."""
    import uvicorn

    from .service import ServiceState, create_app

    cfg = _read_config(config_path)
    seed = _resolve(seed, cfg, "seed", 0, int)
    count = _resolve(count, cfg, "count", 1000, int)
    port = _resolve(port, cfg, "port", int(os.environ.get("SFSL_PORT", 8000)), int)
    lease = float(cfg.get("lease_timeout", os.environ.get("SFSL_LEASE_TIMEOUT", 600)))
    static_dir = static_dir or cfg.get("static_dir") or os.environ.get("SFSL_STATIC_DIR")
    _load_tree_file(tree_path)  # validate early
    store = _load_store(features_path)
    rng = np.random.default_rng(seed)
    tests = annotation.sample_tests(store.sample_ids("base"), count, rng)
    state = ServiceState(tests, annotation.AnswerLog(answers_path), store, lease)
    app = create_app(state, static_dir=static_dir)
    uvicorn.run(app, host="127.0.0.1", port=port)


@main.command("reproduce-desk")
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--seed", type=int)
@click.option("--out", "out_dir", required=True)
@click.option("--n-way", type=int)
@click.option("--episodes", "episode_count", type=int)
@click.option("--count", type=int, help="annotation budget")
@_fail_cleanly
def reproduce_desk(config_path, seed, out_dir, n_way, episode_count, count):
    """End-to-end desk-scale run: synth data -> 1000 simulated tests ->
    train -> eval; deterministic and byte-identical under a fixed seed."""
    cfg = _read_config(config_path)
    seed = _resolve(seed, cfg, "seed", 0, int)
    n_way = _resolve(n_way, cfg, "n_way", 5, int)
    episode_count = _resolve(episode_count, cfg, "episodes", 2000, int)
    count = _resolve(count, cfg, "count", 1000, int)
    os.makedirs(out_dir, exist_ok=True)
    paths = {k: os.path.join(out_dir, v) for k, v in [
        ("tree", "tree.txt"), ("features", "features.csv"),
        ("answers", "answers.jsonl"), ("ckpt", "head.ckpt"), ("report", "report.txt"),
    ]}

    synth = _synth_config(cfg, seed)
    tree, store = data.generate_synthetic(synth)
    _write_tree(tree, paths["tree"])
    with open(paths["features"], "w", encoding="utf-8") as f:
        f.write(data.save_features(store))

    rng = np.random.default_rng(seed)
    base = store.sample_ids("base")
    tests = annotation.sample_tests(base, count, rng)
    answers = annotation.simulate_annotations(
        tests, tree, store.leaf_of, policy="discard", pool=base, rng=rng
    )
    if os.path.exists(paths["answers"]):
        os.remove(paths["answers"])
    log = annotation.AnswerLog(paths["answers"])
    for a in answers:
        log.append(a)

    tcfg = _train_config(cfg, seed, None, None, None)
    head = embedding.train_srn(store, answers, tcfg)
    with open(paths["ckpt"], "w", encoding="utf-8") as f:
        f.write(embedding.save_head(head, tcfg))

    text = _evaluate(tree, store, head, n_way, episode_count, seed, len(answers))
    with open(paths["report"], "w", encoding="utf-8") as f:
        f.write(text)
    click.echo(text, nl=False)
    click.echo(f"artifacts in {out_dir}")


if __name__ == "__main__":
    main()
