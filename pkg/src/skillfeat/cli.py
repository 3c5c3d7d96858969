"""Command-line interface.

Every stochastic command takes ``--seed``; per-step generators are derived
from it by key, so outputs are byte-identical across runs. Errors in the
inputs exit with status 1 and print one line ``error <CODE>: <message>`` to
stderr; usage errors exit with status 2.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import serialize as ser
from .bench import BenchError, TrialConfig, run_goal_benchmark, run_prior_benchmark
from .dmp import DmpConfig, DmpError
from .featgen import feature_specs, generate_features, meta_feature_tensor, normalize_dataset
from .metaprior import LabeledSkill, MetaPriorError, build_training_set, compute_prior, train_irls
from .partseg import InteractionConfig, KernelConfig, SegmentationConfig, segment_demonstration
from .scene import COMPONENT_NAMES, SceneError
from .seeding import int_seed, rng_for, seed_sequence
from .skill import dataset_features, demo_targets, learn_skill
from .ssvs import RelevancePrior, SsvsError, SsvsHyper, map_relevance, run_gibbs
from .synthgen import (GeneratorConfig, GeneratorError, PointCloudConfig, generate_suite,
                       generate_synthetic_pointclouds)

PRIOR_CHOICES = {"uniform": "uniform", "meta": "meta", "oracle": "oracle",
                 "all": "all_features"}
DEFAULT_UNIFORM_RATE = 0.1


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


# --- configuration ------------------------------------------------------------

_SECTIONS = {
    "generator": (GeneratorConfig, {"seed", "task_name", "dmp"}),
    "pointclouds": (PointCloudConfig, {"seed"}),
    "ssvs": (SsvsHyper, set()),
    "dmp": (DmpConfig, set()),
    "bench": (TrialConfig, {"seed", "hyper", "dmp"}),
    "interaction": (InteractionConfig, set()),
    "segmentation": (SegmentationConfig, set()),
    "kernel": (KernelConfig, set()),
}
_PLAIN_SECTIONS = {"suite": {"n_tasks", "part_counts", "noise_std"},
                   "meta": {"l2", "exclude"},
                   "select": {"prior", "uniform_rate", "n_train"}}


def _allowed(section):
    if section in _SECTIONS:
        cls, banned = _SECTIONS[section]
        return {f.name for f in dataclasses.fields(cls)} - banned
    return _PLAIN_SECTIONS[section]


def load_config(path):
    """Read a JSON run config; unknown sections or keys are rejected."""
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except OSError as exc:
        raise CliError("E_IO", f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise CliError("E_SCHEMA", f"config {path} is not valid JSON: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise CliError("E_CONFIG", "config must be a JSON object")
    for section, values in cfg.items():
        if section not in _SECTIONS and section not in _PLAIN_SECTIONS:
            raise CliError("E_CONFIG", f"unknown config section {section!r}")
        if not isinstance(values, dict):
            raise CliError("E_CONFIG", f"config section {section!r} must be an object")
        unknown = set(values) - _allowed(section)
        if unknown:
            raise CliError("E_CONFIG", f"unknown keys in {section!r}: {sorted(unknown)}")
    return cfg


def _build(section, cfg, **extra):
    cls, _ = _SECTIONS[section]
    kw = dict(cfg.get(section, {}))
    for k, v in list(kw.items()):
        if isinstance(v, list):
            kw[k] = tuple(v)
    kw.update({k: v for k, v in extra.items() if v is not None})
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise CliError("E_CONFIG", f"invalid {section} config: {exc}") from None


def _hyper(cfg, args):
    return _build("ssvs", cfg, burn_in=getattr(args, "burn_in", None),
                  samples=getattr(args, "samples", None))


# --- io -------------------------------------------------------------------------

def _read(path, kind=None):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError("E_IO", f"cannot read {path}: {exc.strerror}") from None
    return ser.loads(text, kind), hashlib.sha256(text.encode()).hexdigest()


def _write(text, out):
    if out is None:
        sys.stdout.write(text)
        return
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)


def _emit(kind, body, args, resolved, out=None):
    doc = ser.document(kind, body, seed=getattr(args, "seed", None), config=resolved,
                       command=args.command)
    text = ser.dumps(doc)
    _write(text, out if out is not None else args.out)
    return text


def _datasets(paths):
    out, hashes = [], []
    for p in paths:
        doc, h = _read(p, "dataset")
        out.append(ser.dataset_from(doc))
        hashes.append(h)
    return out, hashes


def _suite(cfg, seed):
    """Synthetic suite described by the ``suite``, ``generator`` and ``dmp`` sections."""
    suite = dict(cfg.get("suite", {}))
    gen_kw = {k: tuple(v) if isinstance(v, list) else v
              for k, v in cfg.get("generator", {}).items()}
    dmp = _build("dmp", cfg)
    _build("generator", {"generator": gen_kw})            # validate early
    kw = {"n_tasks": suite.get("n_tasks", 6),
          "noise_std": gen_kw.pop("noise_std", suite.get("noise_std", 0.05))}
    if "part_counts" in suite:
        kw["part_counts"] = tuple(suite["part_counts"])
    tasks = generate_suite(seed=seed, dmp=dmp, **kw, **gen_kw)
    return tasks, {"suite": kw, "generator": gen_kw, "dmp": dmp.to_dict()}


# --- commands -------------------------------------------------------------------

def cmd_gen(args, cfg):
    if args.out is None:
        raise CliError("E_USAGE", "gen needs --out DIR")
    outdir = Path(args.out)
    if args.kind == "pointclouds":
        pc = _build("pointclouds", cfg, seed=args.seed)
        resolved = {"pointclouds": dataclasses.asdict(pc)}
        for i, scene in enumerate(generate_synthetic_pointclouds(pc)):
            for obj in scene.objects:
                _emit("pointset", ser.pointset_body(obj, scene.frame_times), args, resolved,
                      outdir / f"scene{i:02d}_{obj.object_id}.pointset.json")
            _emit("contact_truth", {"object_id": scene.objects[0].object_id,
                                    "member_indices": scene.truth,
                                    "separation": scene.separation},
                  args, resolved, outdir / f"scene{i:02d}.truth.json")
        return 0
    tasks, resolved = _suite(cfg, args.seed)
    for t in tasks:
        name = t.dataset.task_name
        _emit("dataset", ser.dataset_body(t.dataset), args, resolved,
              outdir / f"{name}.dataset.json")
        _emit("ground_truth", ser.ground_truth_body(t), args, resolved,
              outdir / f"{name}.truth.json")
    return 0


def cmd_segment(args, cfg):
    pointsets, hashes, frame_times = [], [], None
    for p in args.inputs:
        doc, h = _read(p, "pointset")
        ps, ft = ser.pointset_from(doc)
        pointsets.append(ps)
        hashes.append(h)
        frame_times = frame_times if frame_times is not None else ft
    ids = [p.object_id for p in pointsets]
    if len(set(ids)) != len(ids):
        raise CliError("E_DOMAIN", f"duplicate object ids: {ids}")
    inter, seg, ker = (_build("interaction", cfg), _build("segmentation", cfg),
                       _build("kernel", cfg))
    resolved = {"interaction": dataclasses.asdict(inter), "segmentation": dataclasses.asdict(seg),
                "kernel": dataclasses.asdict(ker), "inputs": hashes}
    res = segment_demonstration(pointsets, frame_times, inter, seg, ker,
                                seed=int_seed(args.seed, "segment"))
    objects = []
    for ps in pointsets:
        est = res.estimates[ps.object_id]
        objects.append({"object_id": ps.object_id, "n_estimates": len(est),
                        "n_degenerate": sum(e.degenerate for e in est),
                        "parts": [{"object_id": p.object_id, "member_indices": p.member_indices,
                                   "bbox_center": p.bbox_center, "bbox_dims": p.bbox_dims,
                                   "flagged": p.flagged} for p in res.parts[ps.object_id]]})
    _emit("segmentation", {"objects": objects}, args, resolved)
    return 0


def cmd_features(args, cfg):
    (ds,), hashes = _datasets([args.dataset])
    Phi, parts = dataset_features(ds)
    meta = meta_feature_tensor([d.scene for d in ds.demonstrations])
    body = {"task_name": ds.task_name, "feature_names": [s.name for s in feature_specs(parts)],
            "Phi": Phi, "meta": meta}
    _emit("features", body, args, {"inputs": hashes})
    return 0


def _train_meta(datasets, exclude, seed, l2):
    skills = []
    for ds in datasets:
        if ds.ground_truth_relevance is None:
            raise CliError("E_DOMAIN", f"dataset {ds.task_name!r} has no relevance labels")
        meta = meta_feature_tensor([d.scene for d in ds.demonstrations],
                                   ds.ground_truth_relevance.shape[0])
        skills.append(LabeledSkill(ds.task_name, meta, ds.ground_truth_relevance, ds.group))
    ts = build_training_set(skills, exclude=exclude, seed=int_seed(seed, "meta"))
    return train_irls(ts, l2=l2), skills


def cmd_train_meta(args, cfg):
    datasets, hashes = _datasets(args.datasets)
    meta_cfg = cfg.get("meta", {})
    exclude = tuple(args.exclude or meta_cfg.get("exclude", ()))
    l2 = float(meta_cfg.get("l2", 1e-3))
    mp, _ = _train_meta(datasets, exclude, args.seed, l2)
    resolved = {"exclude": list(exclude), "l2": l2, "inputs": hashes}
    _emit("meta_prior", ser.meta_prior_body(mp), args, resolved)
    return 0


def _selection_setup(args, cfg):
    """Load the dataset and resolve priors or fixed masks per component."""
    (ds,), hashes = _datasets([args.dataset])
    sel_cfg = cfg.get("select", {})
    prior = PRIOR_CHOICES[args.prior or sel_cfg.get("prior", "meta")]
    dmp = _build("dmp", cfg)
    hyper = _hyper(cfg, args)
    Phi, parts = dataset_features(ds)
    targets = demo_targets(ds, dmp)
    N, C = targets.shape[:2]
    M = Phi.shape[0]
    n_train = args.n_train or sel_cfg.get("n_train")
    if n_train:
        if not 2 <= n_train <= N:
            raise CliError("E_DIM", f"--n-train must lie in [2, {N}]")
        train = np.sort(rng_for(args.seed, "split", ds.task_name).choice(N, n_train,
                                                                          replace=False))
    else:
        train = np.arange(N)
    resolved = {"prior": prior, "ssvs": hyper.to_dict(), "dmp": dmp.to_dict(),
                "train": train, "inputs": hashes}
    priors = masks = None
    if prior == "meta":
        if args.meta_prior is None:
            raise CliError("E_USAGE", "--prior meta needs --meta-prior FILE")
        doc, h = _read(args.meta_prior, "meta_prior")
        resolved["meta_prior"] = h
        mp = ser.meta_prior_from(doc)
        meta = meta_feature_tensor([d.scene for d in ds.demonstrations], C)
        if meta.shape[-1] != len(mp.theta):
            raise CliError("E_DIM", "meta prior length does not match the meta features")
        priors = [compute_prior(mp, meta[train, c]) for c in range(C)]
    elif prior == "uniform":
        if args.prior_datasets:
            others, h = _datasets(args.prior_datasets)
            resolved["prior_inputs"] = h
            labels = [o.ground_truth_relevance for o in others
                      if o.ground_truth_relevance is not None]
            if not labels:
                raise CliError("E_DOMAIN", "prior datasets carry no relevance labels")
            rate = sum(int(g.sum()) for g in labels) / sum(g.size for g in labels)
            priors = [RelevancePrior.constant(rate, M)] * C
        else:
            rate = float(args.uniform_rate or sel_cfg.get("uniform_rate", DEFAULT_UNIFORM_RATE))
            resolved["uniform_rate"] = rate
            priors = [RelevancePrior.constant(rate, M)] * C
    elif prior == "oracle":
        if ds.ground_truth_relevance is None:
            raise CliError("E_DOMAIN", "--prior oracle needs ground-truth relevance")
        gt = ds.ground_truth_relevance
        if gt.shape != (C, M):
            raise CliError("E_DIM", f"relevance labels {gt.shape} do not match ({C}, {M})")
        masks = [gt[c] for c in range(C)]
    else:
        masks = [np.ones(M, dtype=bool)] * C
    return ds, Phi, parts, targets[train], train, priors, masks, hyper, dmp, resolved


def cmd_select(args, cfg):
    ds, Phi, parts, targets, train, priors, masks, hyper, dmp, resolved = \
        _selection_setup(args, cfg)
    comps = []
    for c in range(targets.shape[1]):
        if priors is not None:
            norm = normalize_dataset(Phi[:, train], targets[:, c])
            chain = run_gibbs(norm.Phi, norm.Wt, priors[c], hyper,
                              seed_sequence(args.seed, "select", c))
            sel, marg, p1 = map_relevance(chain), chain.marginals, priors[c].p1
        else:
            sel, marg = masks[c], None
            p1 = sel.astype(float)
        comps.append({"component": COMPONENT_NAMES[c], "prior": p1, "selected": sel,
                      "marginals": marg})
    body = {"task_name": ds.task_name, "prior": resolved["prior"], "train_indices": train,
            "feature_names": [s.name for s in feature_specs(parts)], "components": comps}
    _emit("selection", body, args, resolved)
    return 0


def cmd_learn(args, cfg):
    ds, Phi, parts, targets, train, priors, masks, hyper, dmp, resolved = \
        _selection_setup(args, cfg)
    C = targets.shape[1]
    model = learn_skill(Phi[:, train], targets, parts, dmp, priors=priors, selections=masks,
                        hyper=hyper, seeds=[seed_sequence(args.seed, "select", c)
                                            for c in range(C)])
    model = dataclasses.replace(model, meta={"task_name": ds.task_name,
                                             "prior": resolved["prior"]})
    _emit("skill_model", ser.skill_body(model), args, resolved)
    return 0


def cmd_predict(args, cfg):
    mdoc, mh = _read(args.model, "skill_model")
    model = ser.skill_from(mdoc)
    doc, h = _read(args.input)
    if doc["schema"] == "scene":
        scenes = [ser.scene_from(doc["scene"])]
    elif doc["schema"] == "dataset":
        scenes = [d.scene for d in ser.dataset_from(doc).demonstrations]
    else:
        raise CliError("E_SCHEMA", f"predict reads a scene or dataset, got {doc['schema']!r}")
    preds = []
    for i, scene in enumerate(scenes):
        if scene.part_names != model.part_names:
            raise CliError("E_DIM", f"scene {i} has {len(scene.parts)} parts "
                           f"{list(scene.part_names)}, model expects {list(model.part_names)}")
        phi = generate_features(scene, model.part_names).values
        wt = model.predict_targets(phi)
        preds.append({"index": i, "goal": scene.hand_start[:len(wt)] + wt[:, 0], "targets": wt})
    _emit("prediction", {"predictions": preds}, args, {"inputs": [mh, h]})
    return 0


def _bench(args, cfg, runner):
    if args.datasets:
        datasets, hashes = _datasets(args.datasets)
        tasks = datasets
        source = {"inputs": hashes}
    else:
        tasks, source = _suite(cfg, args.seed)
    conditions = tuple(dict.fromkeys(PRIOR_CHOICES[p] for p in args.prior)) if args.prior \
        else None
    bcfg = _build("bench", cfg, seed=args.seed, hyper=_hyper(cfg, args), dmp=_build("dmp", cfg),
                  n_train=args.n_train, repetitions=args.reps, conditions=conditions)
    report = runner(tasks, bcfg)
    resolved = {"bench": bcfg.to_dict()} | source
    _emit("metrics_report", report.to_dict(), args, resolved)
    if args.out is not None:
        _write(report.to_csv(), Path(args.out).with_suffix(".csv"))
    return 0


def cmd_bench_priors(args, cfg):
    return _bench(args, cfg, run_prior_benchmark)


def cmd_bench_goals(args, cfg):
    return _bench(args, cfg, run_goal_benchmark)


# --- parser -----------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="skillfeat", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, stochastic=True, help=""):
        sp = sub.add_parser(name, help=help)
        sp.set_defaults(func=fn)
        sp.add_argument("--config", help="JSON run config")
        sp.add_argument("--out", help="output file (directory for gen); default stdout")
        if stochastic:
            sp.add_argument("--seed", type=int, required=True, help="master seed")
        return sp

    def sampler_flags(sp):
        sp.add_argument("--burn-in", type=int)
        sp.add_argument("--samples", type=int)

    sp = add("gen", cmd_gen, help="generate synthetic tasks or contact point sets")
    sp.add_argument("--kind", choices=("tasks", "pointclouds"), default="tasks")

    sp = add("segment", cmd_segment, help="segment parts of interacting point sets")
    sp.add_argument("inputs", nargs="+", help="pointset documents of one demonstration")

    sp = add("features", cmd_features, stochastic=False, help="features and meta features")
    sp.add_argument("dataset")

    sp = add("train-meta", cmd_train_meta, help="train a meta prior on labeled datasets")
    sp.add_argument("datasets", nargs="+")
    sp.add_argument("--exclude", action="append", help="task or group to leave out")

    for name, fn, hlp in (("select", cmd_select, "feature selection per component"),
                          ("learn", cmd_learn, "feature selection and final weights")):
        sp = add(name, fn, help=hlp)
        sp.add_argument("dataset")
        sp.add_argument("--prior", choices=tuple(PRIOR_CHOICES))
        sp.add_argument("--meta-prior", help="meta_prior document for --prior meta")
        sp.add_argument("--prior-datasets", nargs="+",
                        help="labeled datasets giving the uniform rate")
        sp.add_argument("--uniform-rate", type=float)
        sp.add_argument("--n-train", type=int, help="random subset of demonstrations")
        sampler_flags(sp)

    sp = add("predict", cmd_predict, stochastic=False, help="predict goals with a skill model")
    sp.add_argument("--model", required=True)
    sp.add_argument("input", help="scene or dataset document")

    for name, fn in (("bench-priors", cmd_bench_priors), ("bench-goals", cmd_bench_goals)):
        sp = add(name, fn, help="benchmark over datasets or a generated suite")
        sp.add_argument("datasets", nargs="*")
        sp.add_argument("--prior", action="append", choices=tuple(PRIOR_CHOICES),
                        help="condition to run (repeatable); default all")
        sp.add_argument("--n-train", type=int)
        sp.add_argument("--reps", type=int)
        sampler_flags(sp)
    return p


_DOMAIN = (SceneError, SsvsError, DmpError, BenchError, MetaPriorError, GeneratorError)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except CliError as exc:
        if exc.code == "E_USAGE":
            parser.print_usage(sys.stderr)
            _fail(exc.code, str(exc))
            return 2
        return _fail(exc.code, str(exc))
    except ser.SchemaError as exc:
        return _fail("E_SCHEMA", str(exc))
    except SceneError as exc:
        return _fail("E_DIM" if "part" in str(exc) else "E_DOMAIN", str(exc))
    except _DOMAIN as exc:
        return _fail("E_DOMAIN", str(exc))


def _fail(code, message):
    line = " ".join(str(message).split())
    sys.stderr.write(f"error {code}: {line}\n")
    return 1


if __name__ == "__main__":
    sys.exit(main())
