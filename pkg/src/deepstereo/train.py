"""Single-sample training loop with periodic validation.

Each iteration draws one sample, normalizes it, optionally crops a patch,
runs the network, evaluates the configured loss and takes one RMSprop step
at the scheduled learning rate.  Checkpoints are written for both the last
and the best-validation iteration.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .checkpoint import save_checkpoint
from .config import NetConfig, TrainConfig, learning_rate_at
from .data import StereoSample, make_synthetic_stereogram, normalize, \
    random_crop, sample_tensors
from .estimators import cost_to_posterior
from .losses import l1_softargmin_loss, subpixel_cross_entropy
from .metrics import evaluate_samples
from .model import PdsNetwork
from .optim import RMSprop


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass
class SyntheticSpec:
    """On-the-fly random-dot dataset: sizes, disparity budget, seeds."""

    n_train: int = 24
    n_val: int = 6
    height: int = 32
    width: int = 64
    max_disp: int = 12
    n_layers: int = 3
    seed: int = 0

    def train_samples(self) -> List[StereoSample]:
        return [make_synthetic_stereogram(self.seed * 10_000 + i, self.height,
                                          self.width, self.max_disp,
                                          self.n_layers)
                for i in range(self.n_train)]

    def val_samples(self) -> List[StereoSample]:
        return [make_synthetic_stereogram(self.seed * 10_000 + 5_000 + i,
                                          self.height, self.width,
                                          self.max_disp, self.n_layers)
                for i in range(self.n_val)]

    def test_samples(self, count: int, seed_offset: int = 7_000) -> List[StereoSample]:
        return [make_synthetic_stereogram(self.seed * 10_000 + seed_offset + i,
                                          self.height, self.width,
                                          self.max_disp, self.n_layers)
                for i in range(count)]


@dataclass
class TrainLogRow:
    iteration: int
    train_loss: float
    val_3pe: float
    val_mae: float
    wall_time: float


@dataclass
class TrainLog:
    rows: List[TrainLogRow] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["iteration,train_loss,val_3pe,val_mae,wall_time"]
        for r in self.rows:
            lines.append(f"{r.iteration},{r.train_loss:.6f},{r.val_3pe:.6f},"
                         f"{r.val_mae:.6f},{r.wall_time:.3f}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_csv())


@dataclass
class TrainResult:
    net: PdsNetwork
    log: TrainLog
    best_val_3pe: float
    final_val_3pe: float
    best_state: Optional[dict] = None

    def best_net(self, net_cfg: NetConfig) -> PdsNetwork:
        """Network restored to the best-validation parameters."""
        if self.best_state is None:
            return self.net
        restored = PdsNetwork(net_cfg, seed=0)
        restored.load_state(self.best_state)
        return restored


def compute_loss(net: PdsNetwork, sample: StereoSample, train_cfg: TrainConfig):
    left, right = sample_tensors(sample)
    posterior = cost_to_posterior(net.forward(left, right))
    mask = sample.gt.mask
    if train_cfg.loss == "subpixel_ce":
        return subpixel_cross_entropy(posterior, sample.gt, mask,
                                      b=train_cfg.laplace_b)
    return l1_softargmin_loss(posterior, sample.gt, mask)


def train(train_cfg: TrainConfig, net_cfg: NetConfig,
          data: SyntheticSpec | Sequence[StereoSample],
          val_samples: Optional[Sequence[StereoSample]] = None,
          estimator_kind: str = "subpixel_map",
          quiet: bool = True) -> TrainResult:
    """Train a fresh network; returns it plus the validation log.

    ``data`` is either a synthetic dataset spec or an explicit sample list
    (already loaded; validation samples then come from ``val_samples``).
    """
    if isinstance(data, SyntheticSpec):
        train_pool = data.train_samples()
        val_pool = list(val_samples) if val_samples is not None else data.val_samples()
    else:
        train_pool = list(data)
        val_pool = list(val_samples or [])
    if not train_pool:
        raise ValueError("empty training pool")

    rng = np.random.default_rng(train_cfg.seed)
    net = PdsNetwork(net_cfg, seed=train_cfg.seed)
    optimizer = RMSprop(net.named_parameters(), lr=train_cfg.learning_rate,
                        alpha=train_cfg.rmsprop_alpha,
                        eps=train_cfg.rmsprop_eps)
    log = TrainLog()
    best = (np.inf, None)  # (val 3pe, state snapshot)
    started = time.monotonic()
    window_losses: List[float] = []
    final_val = np.inf

    def validate() -> tuple[float, float]:
        if not val_pool:
            return np.inf, np.inf
        result = evaluate_samples(val_pool, net,
                                  estimator_kind=estimator_kind,
                                  delta=train_cfg.map_delta)
        return result.three_pixel_error, result.mean_absolute_error

    for iteration in range(1, train_cfg.iterations + 1):
        sample = train_pool[int(rng.integers(0, len(train_pool)))]
        sample = normalize(sample)
        if train_cfg.crop_height is not None:
            sample = random_crop(sample, train_cfg.crop_height,
                                 train_cfg.crop_width, rng)
        try:
            loss = compute_loss(net, sample, train_cfg)
        except FloatingPointError as exc:
            raise DivergenceError(
                f"non-finite activations at iteration {iteration}") from exc
        value = loss.item()
        if not np.isfinite(value):
            raise DivergenceError(
                f"non-finite loss {value} at iteration {iteration}")
        window_losses.append(value)
        net.zero_grad()
        loss.value.backward()
        optimizer.step(lr=learning_rate_at(train_cfg, iteration - 1))

        if iteration % train_cfg.val_interval == 0 or iteration == train_cfg.iterations:
            val_3pe, val_mae = validate()
            final_val = val_3pe
            row = TrainLogRow(iteration, float(np.mean(window_losses)),
                              val_3pe, val_mae,
                              time.monotonic() - started)
            log.rows.append(row)
            window_losses.clear()
            if val_3pe < best[0]:
                best = (val_3pe, {k: v.data.copy() for k, v in
                                  net.named_parameters().items()})
            if not quiet:
                print(f"iter {iteration:6d} loss {row.train_loss:.4f} "
                      f"val3pe {val_3pe:.2f} valmae {val_mae:.3f}")

    if train_cfg.checkpoint_dir is not None:
        out = Path(train_cfg.checkpoint_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out / "last.pdsw", net.named_parameters())
        best_state = best[1] if best[1] is not None else {
            k: v.data for k, v in net.named_parameters().items()}
        save_checkpoint(out / "best.pdsw", best_state)
        net_cfg.to_json(out / "net_config.json")
    if train_cfg.log_path is not None:
        log.save(train_cfg.log_path)

    return TrainResult(net, log, best[0], final_val, best_state=best[1])
