"""
Multi-level stitch network.

Three structurally identical towers (node, edge, graph) consume the same
pooled batch. After every hidden layer a learnable 3x3 matrix mixes the
towers' activations; each level then has its own prediction head. A level
without training labels can be masked: its outgoing coefficients are pinned
to zero so it cannot influence the other levels, while it still reads from
them and keeps producing scores.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .autograd import Tensor, grad
from .errors import ConfigError
from .nn import Linear, mlp_forward

LEVELS = ("node", "edge", "graph")
_ALIASES = {"n": "node", "e": "edge", "g": "graph",
            "node": "node", "edge": "edge", "graph": "graph",
            "nodes": "node", "edges": "edge", "graphs": "graph"}

PROB_EPS = 1e-7


def level_name(level: str) -> str:
    try:
        return _ALIASES[level.strip().lower()]
    except (KeyError, AttributeError):
        raise ConfigError(f"unknown level {level!r}; expected one of {LEVELS}") from None


def level_index(level: str) -> int:
    return LEVELS.index(level_name(level))


class StitchUnit:
    """3x3 mixing matrix; row i gives the inputs of output level i."""

    def __init__(self, diag: float = 0.9, off: float = 0.05, name: str = "stitch"):
        alpha = np.full((3, 3), off)
        np.fill_diagonal(alpha, diag)
        self.alpha = Tensor(alpha, requires_grad=True, name=f"{name}.alpha")
        self.mask = np.ones((3, 3))

    def effective(self) -> Tensor:
        if self.mask.all():
            return self.alpha
        return self.alpha * self.mask


def stitch_apply(unit: StitchUnit, e_n: Tensor, e_e: Tensor, e_g: Tensor):
    """Linear recombination of the three towers' same-shape activations."""
    if not (e_n.shape == e_e.shape == e_g.shape):
        raise ValueError(f"stitch inputs differ in shape: {e_n.shape}, {e_e.shape}, {e_g.shape}")
    return tuple(_mix(unit, [e_n, e_e, e_g], range(3)))


def _mix(unit: StitchUnit, ins: list, rows) -> list:
    """Rows of the stitch product; inputs that are None must be masked out."""
    alpha = unit.effective()
    outs = [None, None, None]
    for i in rows:
        acc = None
        for j in range(3):
            if ins[j] is None:
                if unit.mask[i, j]:
                    raise ValueError(f"tower {LEVELS[j]} is needed but was not computed")
                continue
            term = alpha[i, j] * ins[j]
            acc = term if acc is None else acc + term
        outs[i] = acc
    return outs


def _active_towers(model: "GraphStitchModel", target: int) -> list[int]:
    """Towers that can influence `target` through unmasked coefficients."""
    active = {target}
    changed = True
    while changed:
        changed = False
        for unit in model.stitches:
            for i in list(active):
                for j in range(3):
                    if unit.mask[i, j] and j not in active:
                        active.add(j)
                        changed = True
    return sorted(active)


@dataclass
class Tower:
    layers: list[Linear]
    head: list[Linear]

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers + self.head for p in layer.parameters()]


def build_tower(hidden_dim: int, num_layers: int, seed: int, name: str = "tower") -> Tower:
    """One tower plus its head; the same seed always yields the same weights."""
    rng = np.random.default_rng(seed)
    layers = [Linear(hidden_dim, hidden_dim, rng, f"{name}.layer{k}") for k in range(num_layers)]
    head = [Linear(hidden_dim, hidden_dim, rng, f"{name}.head0"),
            Linear(hidden_dim, 1, rng, f"{name}.head1")]
    return Tower(layers, head)


def tower_forward(tower: Tower, x: Tensor, slope: float = 0.01) -> Tensor:
    """Stand-alone tower (no stitching) returning probabilities."""
    h = x
    for layer in tower.layers:
        h = layer(h).leaky_relu(slope)
    return mlp_forward(tower.head, h, slope).sigmoid()


@dataclass
class GraphStitchModel:
    in_dim: int
    hidden_dim: int = 32
    num_layers: int = 2
    seed: int = 0
    slope: float = 0.01
    train_encoder: bool = True
    train_stitch: bool = True
    missing: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.num_layers < 1:
            raise ConfigError("num_layers must be >= 1")
        rng = np.random.default_rng(self.seed)
        self.encoder = Linear(self.in_dim, self.hidden_dim, rng, "encoder")
        # identical initialization: all towers share one seed
        self.towers = {lvl: build_tower(self.hidden_dim, self.num_layers, self.tower_seed, lvl)
                       for lvl in LEVELS}
        self.stitches = [StitchUnit(name=f"stitch{k}") for k in range(self.num_layers)]
        missing = self.missing
        self.missing = frozenset()
        mask_levels(self, missing)

    @property
    def tower_seed(self) -> int:
        return self.seed + 1

    def encode(self, H) -> Tensor:
        """Shared encoder applied to propagated node features."""
        x = H if isinstance(H, Tensor) else Tensor(H)
        return self.encoder(x).leaky_relu(self.slope)

    def named_parameters(self) -> dict[str, Tensor]:
        out = {p.name: p for p in self.encoder.parameters()}
        for lvl in LEVELS:
            out.update({p.name: p for p in self.towers[lvl].parameters()})
        for unit in self.stitches:
            out[unit.alpha.name] = unit.alpha
        return out

    def trainable_parameters(self) -> list[Tensor]:
        params = []
        if self.train_encoder:
            params += self.encoder.parameters()
        for lvl in LEVELS:
            params += self.towers[lvl].parameters()
        if self.train_stitch:
            params += [u.alpha for u in self.stitches]
        return params

    def config(self) -> dict:
        return {"in_dim": self.in_dim, "hidden_dim": self.hidden_dim,
                "num_layers": self.num_layers, "seed": self.seed, "slope": self.slope,
                "train_encoder": self.train_encoder, "train_stitch": self.train_stitch,
                "missing": sorted(self.missing)}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        named = self.named_parameters()
        if set(arrays) != set(named):
            raise ValueError("checkpoint parameters do not match the model layout")
        for k, t in named.items():
            if arrays[k].shape != t.shape:
                raise ValueError(f"shape mismatch for {k}: {arrays[k].shape} vs {t.shape}")
            t.data = np.array(arrays[k], dtype=np.float64)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.named_parameters().items()}


def mask_levels(model: GraphStitchModel, missing: Iterable[str]) -> GraphStitchModel:
    """Pin the outgoing stitch coefficients of each `missing` level to zero.

    Inputs into a missing level stay live. Modifies and returns `model`.
    """
    names = frozenset(level_name(m) for m in missing)
    if len(names) == 3:
        raise ConfigError("cannot mask all three levels")
    for unit in model.stitches:
        mask = np.ones((3, 3))
        for lvl in names:
            j = LEVELS.index(lvl)
            for i in range(3):
                if i != j:
                    mask[i, j] = 0.0
        unit.mask = mask
        unit.alpha.data = unit.alpha.data * mask
    model.missing = frozenset(model.missing | names)
    return model


def forward(model: GraphStitchModel, pooled_inputs: Tensor, target_level: str) -> Tensor:
    """Probabilities in (0, 1) for `target_level`, shape (batch, 1)."""
    lvl = level_name(target_level)
    t = LEVELS.index(lvl)
    x = pooled_inputs if isinstance(pooled_inputs, Tensor) else Tensor(pooled_inputs)
    # towers cut off by masked coefficients contribute exact zeros; skip them
    active = _active_towers(model, t)
    e = [x if i in active else None for i in range(3)]
    for k, unit in enumerate(model.stitches):
        e = [model.towers[LEVELS[i]].layers[k](e[i]).leaky_relu(model.slope)
             if i in active else None for i in range(3)]
        e = _mix(unit, e, active)
    logits = mlp_forward(model.towers[lvl].head, e[t], model.slope)
    return logits.sigmoid()


def weighted_ce_loss(probs: Tensor, labels, gamma: float = 1.0) -> Tensor:
    """``-sum_i [gamma y_i log p_i + (1 - y_i) log(1 - p_i)]`` with clamped p."""
    y = np.asarray(labels, dtype=np.float64).reshape(-1, 1)
    if probs.size != y.size:
        raise ValueError(f"{probs.size} probabilities for {y.size} labels")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be 0 or 1")
    p = probs if probs.shape == y.shape else probs[np.arange(probs.size)]
    p = p.clip(PROB_EPS, 1.0 - PROB_EPS)
    pos = (p.log() * (gamma * y)).sum()
    neg = ((1.0 - p).log() * (1.0 - y)).sum()
    return -(pos + neg)


def anomaly_ratio(labels, mode: str = "inverse") -> float:
    """Class-imbalance weight for the positive class.

    ``inverse`` (default) returns n_normal / n_anomaly, ``direct`` returns
    n_anomaly / n_normal, ``none`` returns 1. Falls back to 1 when a class
    is absent.
    """
    y = np.asarray(labels)
    pos, neg = int((y == 1).sum()), int((y == 0).sum())
    if mode == "none" or pos == 0 or neg == 0:
        return 1.0
    if mode == "inverse":
        return neg / pos
    if mode == "direct":
        return pos / neg
    raise ConfigError(f"unknown gamma mode {mode!r}")


def project_conflicting(grads: Sequence[np.ndarray], rng: np.random.Generator,
                        log: list | None = None) -> list[np.ndarray]:
    """Project each task gradient off the others it conflicts with.

    Other tasks are visited in a random order; projections use the original
    (unprojected) gradients. If `log` is a list, ``(i, j, dot_after)`` is
    appended for every projection performed.
    """
    orig = [np.asarray(g, dtype=np.float64) for g in grads]
    if len(orig) < 2:
        raise ValueError("gradient surgery needs at least two task gradients")
    out = []
    for i, g in enumerate(orig):
        gi = g.copy()
        others = [j for j in range(len(orig)) if j != i]
        for j in rng.permutation(others).tolist():
            gj = orig[j]
            nrm2 = float(gj @ gj)
            if nrm2 == 0.0:
                continue
            dot = float(gi @ gj)
            if dot < 0.0:
                gi = gi - (dot / nrm2) * gj
                if log is not None:
                    log.append((i, j, float(gi @ gj)))
        out.append(gi)
    return out


def gradient_surgery(grads: Sequence[np.ndarray], rng: np.random.Generator | int = 0,
                     log: list | None = None) -> np.ndarray:
    """Sum of conflict-projected task gradients."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    projected = project_conflicting(grads, rng, log)
    total = projected[0].copy()
    for g in projected[1:]:
        total = total + g
    return total


def multi_level_step(losses: dict, params: list[Tensor], opt: "MomentumSGD",
                     rng: np.random.Generator) -> None:
    """One update from per-level losses.

    A single loss is differentiated directly; several losses are
    differentiated separately and combined by `gradient_surgery`.
    """
    if not losses:
        raise ValueError("no losses to optimize")
    if len(losses) == 1:
        grads = grad(next(iter(losses.values())), params)
    else:
        per_task = [np.concatenate([g.ravel() for g in grad(l, params)])
                    for l in losses.values()]
        flat = gradient_surgery(per_task, rng)
        grads, i = [], 0
        for p in params:
            grads.append(flat[i:i + p.size].reshape(p.shape))
            i += p.size
    opt.step(grads)


class MomentumSGD:
    """Gradient descent with momentum and per-tensor norm clipping."""

    def __init__(self, params: list[Tensor], lr: float = 1e-3, momentum: float = 0.9,
                 clip: float = 5.0):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.clip = clip
        self.velocity = [np.zeros(p.shape) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        for p, v, g in zip(self.params, self.velocity, grads):
            norm = float(np.sqrt((g * g).sum()))
            if self.clip and norm > self.clip:
                g = g * (self.clip / norm)
            v *= self.momentum
            v += g
            p.data = p.data - self.lr * v
