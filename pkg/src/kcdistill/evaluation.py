"""Run metrics and cross-run experiments: accuracy, label agreement, reuse,
and the keep-ratio sweep."""

from __future__ import annotations

import numpy as np

from . import nn
from .data import Dataset
from .knowledge import KnowledgeStore, ValueLabeling


def accuracy(model: nn.MlpModel, features: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of argmax-correct predictions on a frozen model."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.shape[0] == 0:
        raise ValueError("empty split")
    predictions = np.argmax(nn.forward(model, x), axis=1)
    return float(np.mean(predictions == y))


def hamming_distance(labels_a, labels_b) -> int:
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape:
        raise ValueError(f"label length mismatch: {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a != b))


def hamming_matrix(label_sets: list[np.ndarray]) -> np.ndarray:
    """Pairwise label disagreement counts across runs."""
    k = len(label_sets)
    out = np.zeros((k, k), dtype=np.int64)
    for i in range(k):
        for j in range(i + 1, k):
            out[i, j] = out[j, i] = hamming_distance(label_sets[i], label_sets[j])
    return out


def reuse_run(labeling: ValueLabeling, config, store: KnowledgeStore,
              dataset: Dataset, mode: str, student: nn.MlpModel | None = None):
    """Retrain a fresh student against a previously exported labeling.

    direct-select trains on the kept samples with their original soft labels;
    with-vaks additionally blends the borderline slice each stage. Everything
    else (warm-up, stage structure, trainer) matches a standard run.
    """
    from . import emdriver

    if student is None:
        student = emdriver.init_student(store.dim, nn.DEFAULT_STUDENT_HIDDEN,
                                        store.num_classes, config.seed)
    return emdriver.run_with_fixed_labels(config, store, student, dataset, labeling, mode)


DEFAULT_RHO_GRID = (0.3, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)


def ratio_sweep(store: KnowledgeStore, dataset: Dataset, base_config, student_hidden,
                rho_grid=DEFAULT_RHO_GRID, seeds=range(5), methods=("kcd", "random-subset")):
    """Accuracy versus final keep ratio for each method, over paired seeds.

    Returns one dict per (rho, seed, method) with accuracy and cost fields,
    ready to serialize as CSV rows.
    """
    from . import emdriver

    rows = []
    for rho in rho_grid:
        for seed in seeds:
            for method in methods:
                schedule = emdriver.ScheduleConfig(
                    total_epochs=base_config.schedule.total_epochs,
                    stage_len=base_config.schedule.stage_len,
                    rho=rho,
                )
                config = emdriver.DistillConfig(
                    schedule=schedule, ogve=base_config.ogve,
                    eps_m=base_config.eps_m, train=base_config.train, seed=seed,
                )
                student = emdriver.init_student(store.dim, student_hidden,
                                                store.num_classes, seed)
                _, record = emdriver.run_baseline(config, store, student, dataset, method)
                rows.append({
                    "rho": rho,
                    "seed": seed,
                    "method": method,
                    "accuracy": record.final_accuracy,
                    "relative_cost": record.cost.relative_cost,
                    "realized_relative_cost": record.cost.realized_relative_cost,
                })
    return rows


def sweep_rows_to_csv(rows) -> str:
    header = "rho,seed,method,accuracy,relative_cost,realized_relative_cost"
    lines = [header]
    for r in rows:
        lines.append(
            f"{r['rho']},{r['seed']},{r['method']},{r['accuracy']:.10g},"
            f"{r['relative_cost']:.10g},{r['realized_relative_cost']:.10g}"
        )
    return "\n".join(lines) + "\n"
