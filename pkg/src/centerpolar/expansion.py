"""Gradient-based input expansion (phase one).

Each sample is perturbed in input space by plain gradient descent on the
expansion objective: pushed away from its class centroid on the embedding
sphere while the semantic terms bound the drift.  The encoder is frozen
throughout; only the inputs move.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import CentroidTable, Tensor, euclidean_distance, geodesic_distance
from .losses import LossConfig
from .tensor import DomainError, backward, record

CALL_COUNTS = {"expand_batch": 0}


def reset_call_counts() -> None:
    CALL_COUNTS["expand_batch"] = 0


class ExpansionDivergedError(ArithmeticError):
    pass


@dataclass(frozen=True)
class ExpansionConfig:
    iterations_te: int = 10  # gradient steps per expansion round
    step_size: float = 1e-2  # input-space SGD step
    expansion_epochs: tuple = (1, 4, 7)  # epochs (1-based) that run a round

    def __post_init__(self):
        if not isinstance(self.iterations_te, int) or self.iterations_te < 1:
            raise ValueError(f"iterations_te must be >= 1, got {self.iterations_te}")
        if not self.step_size > 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        epochs = tuple(sorted(set(int(e) for e in self.expansion_epochs)))
        if any(e < 1 for e in epochs):
            raise ValueError(f"expansion epochs must be >= 1, got {epochs}")
        object.__setattr__(self, "expansion_epochs", epochs)


@dataclass(frozen=True)
class ExpandedSample:
    features: np.ndarray
    class_id: int
    source_id: int  # id of the original sample this grew from
    domain_tag: str = "expanded"


@dataclass
class ExpandedSet:
    samples: list = field(default_factory=list)

    def __len__(self):
        return len(self.samples)


def expand_batch(
    batch,
    model,
    centroids: CentroidTable,
    econfig: ExpansionConfig,
    lconfig: LossConfig,
    trajectory_sink: list | None = None,
) -> ExpandedSet:
    """Expand a batch of (sample_id, x, class_id) triples independently.

    Returns the final iterates; model parameters are not touched.  When
    `trajectory_sink` is given, rows (sample_id, iter, d_geo, d_euclid, loss)
    are appended for every iterate including the initial one.
    """
    CALL_COUNTS["expand_batch"] += 1
    out = ExpandedSet()
    for sample_id, x, class_id in batch:
        final = _expand_sample(
            int(sample_id),
            x,
            int(class_id),
            model,
            centroids,
            econfig.iterations_te,
            econfig.step_size,
            lconfig,
            trajectory_sink,
        )
        out.samples.append(
            ExpandedSample(features=final, class_id=int(class_id), source_id=int(sample_id))
        )
    return out


def expansion_trajectory(
    sample,
    model,
    centroids: CentroidTable,
    econfig: ExpansionConfig,
    lconfig: LossConfig,
    iterations: int | None = None,
    sample_id: int = 0,
) -> list:
    """Diagnostic run for one (x, class_id) sample.

    Returns iterations+1 rows (iteration, d_geo, d_euclid, loss), row 0
    describing the unperturbed input.  `iterations` overrides the config
    (0 is allowed here and yields the single initial row).
    """
    x, class_id = sample
    n_iter = econfig.iterations_te if iterations is None else int(iterations)
    if n_iter < 0:
        raise ValueError(f"iterations must be >= 0, got {n_iter}")
    sink: list = []
    _expand_sample(
        sample_id,
        x,
        int(class_id),
        model,
        centroids,
        n_iter,
        econfig.step_size,
        lconfig,
        sink,
    )
    return [(it, dg, de, lv) for (_sid, it, dg, de, lv) in sink]


def _expand_sample(
    sample_id: int,
    x,
    class_id: int,
    model,
    centroids: CentroidTable,
    iterations: int,
    step_size: float,
    lconfig: LossConfig,
    sink: list | None,
) -> np.ndarray:
    x0 = np.array(x, dtype=np.float64).reshape(-1)
    mu = centroids.vector(class_id)
    # the hinge reference: embedding distance of the unperturbed input
    e0 = model.forward(Tensor(x0), frozen=True)
    d_orig = euclidean_distance(Tensor(mu), e0).item()

    def build_loss(xt: Tensor) -> Tensor:
        mu_t = Tensor(mu)
        e_t = model.forward(xt, frozen=True)
        geo = -geodesic_distance(mu_t, e_t)
        sem_low = (Tensor(x0) - xt).square().sum()
        hinge = (euclidean_distance(mu_t, e_t) - d_orig + lconfig.margin_m).relu()
        return geo + sem_low + hinge

    x_cur = x0.copy()
    if sink is not None:
        sink.append((sample_id, 0) + _diagnose(x_cur, mu, model, build_loss))
    for t in range(1, iterations + 1):
        try:
            with record():
                xt = Tensor(x_cur, requires_grad=True)
                loss = build_loss(xt)
                backward(loss)
        except (DomainError, FloatingPointError) as e:
            # a non-finite embedding means the iterate already ran away
            raise ExpansionDivergedError(
                f"expansion diverged at sample {sample_id}, iteration {t}: {e}"
            ) from e
        g = xt.grad
        if g is None or not np.isfinite(g).all():
            raise ExpansionDivergedError(
                f"expansion diverged at sample {sample_id}, iteration {t}: non-finite gradient"
            )
        with np.errstate(over="ignore", invalid="ignore"):
            x_cur = x_cur - step_size * g
        if not np.isfinite(x_cur).all():
            raise ExpansionDivergedError(
                f"expansion diverged at sample {sample_id}, iteration {t}: non-finite iterate"
            )
        if sink is not None:
            sink.append((sample_id, t) + _diagnose(x_cur, mu, model, build_loss))
    return x_cur


def _diagnose(x_cur: np.ndarray, mu: np.ndarray, model, build_loss) -> tuple:
    e = model.forward(Tensor(x_cur), frozen=True)
    d_geo = geodesic_distance(Tensor(mu), e).item()
    d_euclid = euclidean_distance(Tensor(mu), e).item()
    loss_value = build_loss(Tensor(x_cur)).item()
    return (d_geo, d_euclid, loss_value)
