"""Benchmark protocols: prior comparison for feature selection and goal prediction.

Four conditions decide which features a skill uses:

* ``uniform``: sampler with the same prior probability for every feature,
* ``meta``: sampler with a meta prior trained on the other tasks,
* ``all_features``: every feature, no selection,
* ``oracle``: the ground-truth relevant features.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .dmp import DmpConfig
from .featgen import meta_feature_tensor, normalize_dataset
from .metaprior import (LabeledSkill, build_training_set, compute_prior, train_irls,
                        uniform_prior)
from .scene import COMPONENT_NAMES, Dataset
from .seeding import int_seed, rng_for, seed_sequence
from .skill import dataset_features, demo_goals, demo_targets
from .ssvs import SsvsHyper, fit_final_weights, map_relevance, run_gibbs

CONDITIONS = ("uniform", "meta", "all_features", "oracle")
METRICS = ("accuracy", "precision", "recall", "rmse")
CSV_COLUMNS = ("trial_id", "task", "component", "condition") + METRICS


class BenchError(ValueError):
    pass


@dataclass(frozen=True)
class TrialConfig:
    n_train: int = 5
    repetitions: int = 10
    conditions: tuple = CONDITIONS
    seed: int = 0
    hyper: SsvsHyper = field(default_factory=SsvsHyper)
    dmp: DmpConfig = field(default_factory=DmpConfig)
    l2: float = 1e-3
    leak: bool = False       # draw the goal test demo from the training set

    def __post_init__(self):
        if self.repetitions < 1:
            raise BenchError("repetitions must be >= 1")
        if self.n_train < 2:
            raise BenchError("n_train must be >= 2")
        unknown = set(self.conditions) - set(CONDITIONS)
        if unknown:
            raise BenchError(f"unknown conditions: {sorted(unknown)}")

    def to_dict(self):
        return {"n_train": self.n_train, "repetitions": self.repetitions,
                "conditions": list(self.conditions), "seed": self.seed,
                "hyper": self.hyper.to_dict(), "dmp": self.dmp.to_dict(), "l2": self.l2,
                "leak": self.leak}


@dataclass(frozen=True)
class TaskData:
    """Everything the protocols need from one task, with targets extracted once."""
    name: str
    group: str
    Phi: np.ndarray         # (M, N)
    targets: np.ndarray     # (N, C, K+1)
    goals: np.ndarray       # (N, C)
    starts: np.ndarray      # (N, C)
    meta: np.ndarray        # (N, C, M, 8)
    truth: np.ndarray       # (C, M)

    @property
    def n_demos(self):
        return self.Phi.shape[1]

    @property
    def n_components(self):
        return self.targets.shape[1]

    def labeled(self):
        return LabeledSkill(self.name, self.meta, self.truth, self.group)


def prepare_task(task, dmp: DmpConfig = DmpConfig()) -> TaskData:
    """Extract features, meta features, targets and goals of a Dataset (or SyntheticTask)."""
    if isinstance(task, TaskData):
        return task
    ds: Dataset = getattr(task, "dataset", task)
    if ds.ground_truth_relevance is None:
        raise BenchError(f"task {ds.task_name!r} has no ground-truth relevance")
    Phi, _ = dataset_features(ds)
    scenes = [d.scene for d in ds.demonstrations]
    targets = demo_targets(ds, dmp)
    C = targets.shape[1]
    truth = np.asarray(ds.ground_truth_relevance, dtype=bool)
    if truth.shape != (C, Phi.shape[0]):
        raise BenchError(f"relevance labels {truth.shape} do not match "
                         f"({C}, {Phi.shape[0]}) for task {ds.task_name!r}")
    starts = np.array([s.hand_start[:C] for s in scenes])
    return TaskData(ds.task_name, ds.group, Phi, targets, demo_goals(ds), starts,
                    meta_feature_tensor(scenes, C), truth)


def selection_metrics(selected, truth):
    """Accuracy, precision and recall of a selection mask against the truth.

    No predictions gives precision 1 only when there are no positives; no
    positives gives recall 1.
    """
    s = np.asarray(selected, dtype=bool)
    t = np.asarray(truth, dtype=bool)
    if s.shape != t.shape:
        raise BenchError("selection and truth differ in length")
    tp = int(np.sum(s & t))
    accuracy = float(np.mean(s == t)) if s.size else 1.0
    n_pred, n_pos = int(s.sum()), int(t.sum())
    precision = tp / n_pred if n_pred else (1.0 if n_pos == 0 else 0.0)
    recall = tp / n_pos if n_pos else 1.0
    return accuracy, float(precision), float(recall)


@dataclass(frozen=True)
class MetricsReport:
    kind: str
    rows: tuple
    aggregates: dict
    config: dict
    seed: int
    flags: dict = field(default_factory=dict)

    def to_dict(self):
        return {"kind": self.kind, "seed": self.seed, "config": self.config,
                "flags": dict(self.flags), "aggregates": self.aggregates,
                "rows": [dict(r) for r in self.rows]}

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow(["" if r.get(k) is None else _fmt(r[k]) for k in CSV_COLUMNS])
        return buf.getvalue()

    def mean(self, condition, metric, component="pooled"):
        return self.aggregates[condition][component][metric]["mean"]

    def rms(self, condition, component="pooled"):
        return self.aggregates[condition][component]["rmse"]["rms"]

    def mean_rmse(self, condition):
        """Mean over goal predictions of the RMSE across components."""
        return self.aggregates[condition]["pooled"]["trial_rmse"]["mean"]


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else str(v)


def _stats(values):
    v = np.array([x for x in values if x is not None], dtype=float)
    if v.size == 0:
        return None
    return {"n": int(v.size), "mean": float(v.mean()), "std": float(v.std())}


def aggregate_rows(rows, conditions):
    """Mean and std of every metric per condition, per component and pooled."""
    out = {}
    for cond in conditions:
        sub = [r for r in rows if r["condition"] == cond]
        comps = sorted({r["component"] for r in sub}, key=COMPONENT_NAMES.index)
        groups = {c: [r for r in sub if r["component"] == c] for c in comps}
        groups["pooled"] = sub
        out[cond] = {}
        for g, rs in groups.items():
            entry = {}
            for m in METRICS:
                st = _stats(r.get(m) for r in rs)
                if st is not None and m == "rmse":
                    st["rms"] = float(np.sqrt(np.mean([r[m] ** 2 for r in rs])))
                entry[m] = st
            out[cond][g] = entry
        if any(r.get("rmse") is not None for r in sub):
            out[cond]["pooled"]["trial_rmse"] = _stats(trial_rmse(sub).values())
    return out


def trial_rmse(rows):
    """RMSE over the components of each (repetition, task) goal prediction."""
    sq = {}
    for r in rows:
        if r.get("rmse") is not None:
            sq.setdefault((r["repetition"], r["task"]), []).append(r["rmse"] ** 2)
    return {k: float(np.sqrt(np.mean(v))) for k, v in sorted(sq.items())}


def _split(rng, n_demos, n_train, goal, leak):
    if n_train > n_demos - (1 if goal and not leak else 0):
        raise BenchError(f"n_train={n_train} exceeds the {n_demos} available demonstrations")
    if not goal:
        return np.sort(rng.choice(n_demos, n_train, replace=False)), None
    test = int(rng.integers(n_demos))
    others = np.delete(np.arange(n_demos), test)
    if leak:
        train = np.append(rng.choice(others, n_train - 1, replace=False), test)
    else:
        train = rng.choice(others, n_train, replace=False)
    return np.sort(train), test


def _meta_prior(tasks, held: TaskData, cfg: TrialConfig, rep):
    pool = [t.labeled() for t in tasks]
    ts = build_training_set(pool, exclude=(held.name, held.group),
                            seed=int_seed(cfg.seed, "meta", rep, held.name))
    return train_irls(ts, l2=cfg.l2)


def _selections(task: TaskData, tasks, train, cfg: TrialConfig, rep, kind):
    """Selection mask per (condition, component) on the training demos."""
    C, M = task.truth.shape
    others = [t.labeled() for t in tasks if t.name != task.name and t.group != task.group]
    priors = {}
    if "uniform" in cfg.conditions:
        u = uniform_prior(others, M)
        priors["uniform"] = [u] * C
    if "meta" in cfg.conditions:
        mp = _meta_prior(tasks, task, cfg, rep)
        priors["meta"] = [compute_prior(mp, task.meta[train, c]) for c in range(C)]
    out = {}
    for cond in cfg.conditions:
        masks = []
        for c in range(C):
            if cond == "all_features":
                masks.append(np.ones(M, dtype=bool))
            elif cond == "oracle":
                masks.append(task.truth[c].copy())
            else:
                norm = normalize_dataset(task.Phi[:, train], task.targets[train, c])
                ss = seed_sequence(cfg.seed, "gibbs", kind, rep, task.name, cond, c)
                chain = run_gibbs(norm.Phi, norm.Wt, priors[cond][c], cfg.hyper, ss)
                masks.append(map_relevance(chain))
        out[cond] = masks
    return out


def _trial_id(kind, rep, t, cond, c):
    return f"{kind}:{rep:03d}:{t:03d}:{CONDITIONS.index(cond)}:{cond}:{COMPONENT_NAMES[c]}"


def _run(tasks, cfg: TrialConfig, kind):
    tasks = [prepare_task(t, cfg.dmp) for t in tasks]
    if len({t.name for t in tasks}) != len(tasks):
        raise BenchError("task names must be unique")
    rows, leaks = [], 0
    for rep in range(cfg.repetitions):
        for ti, task in enumerate(tasks):
            rng = rng_for(cfg.seed, "split", kind, rep, task.name)
            train, test = _split(rng, task.n_demos, cfg.n_train, kind == "goal", cfg.leak)
            leaked = test is not None and test in train
            leaks += leaked
            masks = _selections(task, tasks, train, cfg, rep, kind)
            for cond in cfg.conditions:
                for c in range(task.n_components):
                    acc, prec, rec = selection_metrics(masks[cond][c], task.truth[c])
                    row = {"trial_id": _trial_id(kind, rep, ti, cond, c), "task": task.name,
                           "component": COMPONENT_NAMES[c], "condition": cond,
                           "repetition": rep, "accuracy": acc, "precision": prec,
                           "recall": rec, "rmse": None,
                           "n_selected": int(masks[cond][c].sum())}
                    if test is not None:
                        pred = _predict_goal(task, train, test, c, masks[cond][c])
                        row["rmse"] = float(abs(pred - task.goals[test, c]))
                        row["leak"] = bool(leaked)
                    rows.append(row)
    rows.sort(key=lambda r: r["trial_id"])
    report = MetricsReport(kind, tuple(rows), aggregate_rows(rows, cfg.conditions),
                           cfg.to_dict(), cfg.seed,
                           {"leak_detected": bool(leaks), "n_leaks": int(leaks)})
    return report


def _predict_goal(task: TaskData, train, test, c, mask):
    norm = normalize_dataset(task.Phi[:, train], task.targets[train, c])
    W = fit_final_weights(norm.Phi, norm.Wt, mask)
    z = norm.features.transform(task.Phi[:, [test]], 1)[:, 0]
    wt0 = norm.targets.inverse((W.T @ z)[None, :], 0)[0, 0]
    return task.starts[test, c] + wt0


def run_prior_benchmark(tasks, cfg: TrialConfig = TrialConfig()) -> MetricsReport:
    """Feature-selection accuracy, precision and recall on random training subsets.

    For every repetition and task, a meta prior is trained on the other tasks
    only; every sampled component is scored against the ground truth.
    """
    return _run(tasks, cfg, "prior")


def run_goal_benchmark(tasks, cfg: TrialConfig = TrialConfig()) -> MetricsReport:
    """Goal-prediction error on one held-out demonstration per repetition and task.

    With ``cfg.leak`` the test demonstration is also used for training; the
    report then carries ``leak_detected``.
    """
    return _run(tasks, cfg, "goal")


def report_from_dict(d) -> MetricsReport:
    return MetricsReport(d["kind"], tuple(d["rows"]), d["aggregates"], d["config"],
                         int(d["seed"]), dict(d.get("flags", {})))


def trial_config_from_dict(d) -> TrialConfig:
    d = dict(d)
    if "hyper" in d:
        d["hyper"] = SsvsHyper(**d["hyper"])
    if "dmp" in d:
        d["dmp"] = DmpConfig(**d["dmp"])
    if "conditions" in d:
        d["conditions"] = tuple(d["conditions"])
    return TrialConfig(**d)


__all__ = ["CONDITIONS", "TrialConfig", "TaskData", "MetricsReport", "BenchError",
           "prepare_task", "selection_metrics", "run_prior_benchmark", "run_goal_benchmark",
           "aggregate_rows", "trial_rmse", "report_from_dict", "trial_config_from_dict"]
