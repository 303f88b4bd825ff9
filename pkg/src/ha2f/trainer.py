"""Optimisation loop, validation-based checkpoint selection and the ablation runner."""
from __future__ import annotations

import copy
import dataclasses
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import torch

from . import seeding
from .config import Ablation, ablation_rows, to_jsonable
from .data import augment, to_batch
from .errors import CompatibilityError, ContractError, LoadError, TrainingAborted
from .head import classify, loss
from .metrics import ConfusionCounts, Scores, accumulate, scores
from .model import HA2F, n_parameters

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 1


def poly_lr(step, cfg):
    if not 0 <= step <= cfg.max_steps:
        raise ContractError(f"step {step} outside [0, {cfg.max_steps}]")
    return cfg.lr0 * (1.0 - step / cfg.max_steps) ** cfg.poly_power


@dataclass
class TrainState:
    model: HA2F
    optimizer: torch.optim.Optimizer
    cfg: object
    step: int = 0


def init_state(backbone_cfg, cfg):
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seeding.derive(cfg.seed, "torch"))
        model = HA2F(backbone_cfg, cfg.ablation)
    # decoupled weight decay
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.lr0, betas=cfg.betas, weight_decay=cfg.weight_decay)
    return TrainState(model, opt, cfg)


def train_step(state, batch):
    """One AdamW update at ``poly_lr(state.step)``; returns ``(state, loss)``."""
    a, b, label = batch
    lr = poly_lr(state.step, state.cfg)
    for group in state.optimizer.param_groups:
        group["lr"] = lr
    state.model.train()
    value = loss(state.model(a, b), label, state.cfg.loss_weights)
    if not torch.isfinite(value):
        raise TrainingAborted(state.step, lr, value.item())
    state.optimizer.zero_grad(set_to_none=True)
    value.backward()
    state.optimizer.step()
    state.step += 1
    return state, value.item()


def batch_indices(n, cfg):
    """Endless, deterministic sequence of index batches (reshuffled each epoch)."""
    bs = min(cfg.batch_size, n)
    epoch = 0
    while True:
        perm = seeding.rng(cfg.seed, "order", epoch).permutation(n)
        for i in range(0, n - bs + 1, bs):
            yield perm[i:i + bs]
        epoch += 1


def make_batch(pairs, idx, cfg, step):
    chosen = [pairs[i] for i in idx]
    if cfg.augment:
        crop = int(round(chosen[0].size[0] * cfg.crop_fraction))
        chosen = [augment(p, seeding.derive(cfg.seed, "augment", step, j), crop) for j, p in enumerate(chosen)]
    return to_batch(chosen)


@torch.no_grad()
def predict(model, pairs, batch_size=8, threshold=0.5):
    """Binary change masks for ``pairs`` in evaluation mode."""
    model.eval()
    masks = []
    for i in range(0, len(pairs), batch_size):
        a, b, _ = to_batch(pairs[i:i + batch_size])
        masks.extend(classify(model(a, b), threshold).mask)
    return masks


def evaluate(model, pairs, batch_size=8, threshold=0.5):
    counts = ConfusionCounts()
    for pair, mask in zip(pairs, predict(model, pairs, batch_size, threshold)):
        counts = accumulate(mask, pair.label, counts)
    return counts, scores(counts)


@dataclass
class CheckpointRecord:
    step: int
    params: dict | None
    val_scores: Scores
    is_best: bool = False


def _rank_key(rec):
    # higher F1, then higher IoU, then earlier step
    return (rec.val_scores.f1, rec.val_scores.iou, -rec.step)


def select_best(records):
    """Flag exactly one record as best and return it."""
    if not records:
        raise ContractError("no checkpoint records to choose from")
    best = max(records, key=_rank_key)
    for rec in records:
        rec.is_best = rec is best
    return best


@dataclass
class FitResult:
    best: CheckpointRecord
    records: list[CheckpointRecord]
    log: list[dict]
    state: TrainState = field(repr=False)


def log_record(step, lr, loss_value, s):
    return {"step": step, "lr": lr, "loss": loss_value, "val": s.short()}


def fit(backbone_cfg, cfg, train_set, val_set, log_path=None):
    """Train for ``cfg.max_steps`` steps, validating every ``cfg.eval_every``.

    Only the best record keeps its parameter snapshot. If ``log_path`` is
    given, one JSON line per evaluation is written there.
    """
    if not train_set or not val_set:
        raise ContractError("fit needs non-empty train and val splits")
    state = init_state(backbone_cfg, cfg)
    records, history = [], []
    best = None
    order = batch_indices(len(train_set), cfg)
    sink = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        while state.step < cfg.max_steps:
            lr = poly_lr(state.step, cfg)
            batch = make_batch(train_set, next(order), cfg, state.step)
            state, value = train_step(state, batch)
            if state.step % cfg.eval_every == 0 or state.step == cfg.max_steps:
                _, s = evaluate(state.model, val_set, threshold=cfg.threshold)
                rec = CheckpointRecord(state.step, None, s)
                records.append(rec)
                new_best = select_best(records)
                if new_best is rec:
                    rec.params = copy.deepcopy(state.model.state_dict())
                    if best is not None:
                        best.params = None
                    best = rec
                entry = log_record(state.step, lr, value, s)
                history.append(entry)
                log.info("step %d lr %.3g loss %.4f val f1 %.4f iou %.4f", state.step, lr, value, s.f1, s.iou)
                if sink:
                    sink.write(json.dumps(entry, sort_keys=True) + "\n")
                    sink.flush()
    finally:
        if sink:
            sink.close()
    return FitResult(best, records, history, state)


def model_from_record(backbone_cfg, ablation, record):
    model = HA2F(backbone_cfg, ablation)
    model.load_state_dict(record.params)
    return model


@dataclass
class AblationRow:
    ablation: Ablation
    scores: Scores
    n_params: int
    best_step: int


def run_ablation(backbone_cfg, cfg, train_set, val_set, test_set, max_steps=None):
    """Train and test all eight module combinations with identical seeds and data order."""
    rows = []
    for ab in ablation_rows():
        changes = {"ablation": ab}
        if max_steps is not None:
            changes.update(max_steps=max_steps, eval_every=min(cfg.eval_every, max_steps))
        row_cfg = dataclasses.replace(cfg, **changes)
        try:
            result = fit(backbone_cfg, row_cfg, train_set, val_set)
            model = model_from_record(backbone_cfg, ab, result.best)
            _, s = evaluate(model, test_set, threshold=cfg.threshold)
        except Exception as exc:
            exc.add_note(f"while running ablation row hafs={ab.hafs} sat={ab.sat} dfsm={ab.dfsm}")
            raise
        rows.append(AblationRow(ab, s, n_parameters(model), result.best.step))
    return rows


def ablation_table(rows):
    return [
        {"hafs": r.ablation.hafs, "sat": r.ablation.sat, "dfsm": r.ablation.dfsm,
         "p": r.scores.precision, "r": r.scores.recall, "oa": r.scores.oa,
         "f1": r.scores.f1, "iou": r.scores.iou, "n_params": r.n_params, "best_step": r.best_step}
        for r in rows
    ]


def ablation_text(rows):
    mark = {True: "on", False: "off"}
    head = f"{'HAFS':>5} {'SAT':>5} {'DFSM':>5} | {'P':>7} {'R':>7} {'OA':>7} {'F1':>7} {'IoU':>7} | {'params':>8}"
    lines = [head, "-" * len(head)]
    for r in rows:
        s = r.scores
        lines.append(
            f"{mark[r.ablation.hafs]:>5} {mark[r.ablation.sat]:>5} {mark[r.ablation.dfsm]:>5} | "
            f"{100 * s.precision:7.2f} {100 * s.recall:7.2f} {100 * s.oa:7.2f} {100 * s.f1:7.2f} {100 * s.iou:7.2f} | "
            f"{r.n_params:>8d}"
        )
    return "\n".join(lines)


# -- checkpoints -------------------------------------------------------------

def save_checkpoint(path, record, experiment):
    payload = {
        "format_version": CHECKPOINT_FORMAT,
        "config": experiment.to_dict(),
        "step": record.step,
        "val_scores": to_jsonable(record.val_scores),
        "state_dict": record.params,
    }
    buf = io.BytesIO()
    torch.save(payload, buf)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path):
    from .config import ExperimentConfig

    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except (OSError, RuntimeError) as exc:
        raise LoadError(f"cannot read checkpoint {path}: {exc}") from exc
    if payload.get("format_version") != CHECKPOINT_FORMAT:
        raise CompatibilityError(
            f"checkpoint format {payload.get('format_version')} is not supported (expected {CHECKPOINT_FORMAT})"
        )
    payload["config"] = ExperimentConfig.from_dict(payload["config"])
    return payload


def model_from_checkpoint(payload):
    exp = payload["config"]
    model = HA2F(exp.backbone, exp.train.ablation)
    try:
        model.load_state_dict(payload["state_dict"])
    except RuntimeError as exc:
        raise CompatibilityError(f"checkpoint parameters do not match its config: {exc}") from exc
    model.eval()
    return model
