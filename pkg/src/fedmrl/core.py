"""Training computation for the fused dual-model protocol.

Every client couples two models over the same input: a shared small
"global" model (extractor to a d1-wide representation plus a d1 -> L
header) and a private heterogeneous "local" model (extractor to d2 wide,
d2 -> L header), with d1 <= d2.  A per-client projector mixes the two
representations:

    spliced = [rep_global | rep_local]            (n, d1 + d2)
    fused   = spliced @ W_p.T                     (n, d2)

The fused row is read at two granularities, nested like matryoshka
dolls: its first d1 entries feed the global header and the full d2
entries feed the local header.  Both heads incur cross-entropy, and one
SGD step moves the global model, the local model, and the projector
simultaneously.  All gradients here are derived by hand and checked
against finite differences in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .models import (
    AffineLayer,
    Extractor,
    ForwardCache,
    Header,
    LayerGrads,
    ModelConfig,
    StaleCacheError,
    init_model,
)
from .numerics import ShapeError, as_matrix, batch_cross_entropy, matmul, sgd_step

__all__ = [
    "GlobalSmallModel",
    "LocalHeteroModel",
    "Projector",
    "LossWeights",
    "LearningRates",
    "InferenceVariant",
    "TheoryConstants",
    "TrainingCache",
    "GradientSet",
    "init_global_model",
    "init_local_model",
    "init_projector",
    "splice",
    "project",
    "matryoshka_prefixes",
    "forward_loss",
    "forward_loss_ablation_no_mrl",
    "forward_loss_single",
    "loss_gradients",
    "backward_and_step",
    "backward_and_step_single",
    "parameter_vector",
    "with_parameter_vector",
    "gradient_vector",
    "infer",
    "lr_bound",
]


class InferenceVariant(Enum):
    """Which parameters serve a prediction once training is done.

    MIX_LARGE (the default) runs both extractors, projects, and reads the
    local header on the full fused row.  MIX_SMALL reads the global
    header on the d1 prefix instead.  SINGLE_SMALL and SINGLE_LARGE run
    one model alone, ignoring the projector entirely.
    """

    MIX_LARGE = "mix_large"
    MIX_SMALL = "mix_small"
    SINGLE_SMALL = "single_small"
    SINGLE_LARGE = "single_large"


@dataclass
class GlobalSmallModel:
    """The shared model: the only parameters that ever leave a client."""

    extractor: Extractor
    header: Header

    def __post_init__(self):
        if self.extractor.rep_dim != self.header.in_dim:
            raise ShapeError(
                f"extractor rep width {self.extractor.rep_dim} != header input "
                f"{self.header.in_dim}"
            )

    @property
    def rep_dim(self) -> int:
        return self.extractor.rep_dim

    @property
    def classes(self) -> int:
        return self.header.classes

    def parameter_arrays(self) -> list[np.ndarray]:
        """All parameters in declared order: layer weight, bias, ..., header."""
        arrays = []
        for layer in self.extractor.layers:
            arrays.append(layer.weight)
            if layer.bias is not None:
                arrays.append(layer.bias)
        arrays.append(self.header.weight)
        return arrays

    def param_count(self) -> int:
        return self.extractor.param_count() + self.header.param_count()

    def clone(self) -> "GlobalSmallModel":
        return GlobalSmallModel(self.extractor.clone(), self.header.clone())


@dataclass
class LocalHeteroModel:
    """A client's private model; its width and depth may differ per client."""

    extractor: Extractor
    header: Header

    def __post_init__(self):
        if self.extractor.rep_dim != self.header.in_dim:
            raise ShapeError(
                f"extractor rep width {self.extractor.rep_dim} != header input "
                f"{self.header.in_dim}"
            )

    @property
    def rep_dim(self) -> int:
        return self.extractor.rep_dim

    @property
    def classes(self) -> int:
        return self.header.classes

    def param_count(self) -> int:
        return self.extractor.param_count() + self.header.param_count()

    def clone(self) -> "LocalHeteroModel":
        return LocalHeteroModel(self.extractor.clone(), self.header.clone())


@dataclass
class Projector:
    """Bias-free linear mix, weight shape (d2, d1 + d2)."""

    weight: np.ndarray

    def __post_init__(self):
        self.weight = as_matrix(self.weight)

    @property
    def d2(self) -> int:
        return self.weight.shape[0]

    @property
    def d1(self) -> int:
        return self.weight.shape[1] - self.weight.shape[0]

    def param_count(self) -> int:
        return self.weight.size

    def clone(self) -> "Projector":
        return Projector(self.weight.copy())

    @classmethod
    def selection(cls, d1: int, d2: int) -> "Projector":
        """Projector that copies rep_local through and ignores rep_global.

        fused == rep_local exactly, which reduces the ablated loss to a
        plain local-model loss.
        """
        weight = np.zeros((d2, d1 + d2))
        weight[:, d1:] = np.eye(d2)
        return cls(weight)


@dataclass(frozen=True)
class LossWeights:
    """Mixing weights for the two heads' cross-entropies; default (1, 1)."""

    global_head: float = 1.0
    local_head: float = 1.0

    def __post_init__(self):
        if self.global_head < 0 or self.local_head < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass(frozen=True)
class LearningRates:
    """Step sizes for the three parameter groups moved by one update."""

    global_model: float
    local_model: float
    projector: float

    @classmethod
    def uniform(cls, lr: float) -> "LearningRates":
        return cls(lr, lr, lr)


@dataclass(frozen=True)
class TheoryConstants:
    """Constants of the convergence bound on the shared model's training loss.

    lipschitz (L1) bounds the gradient's smoothness, grad_variance (sigma
    squared) the stochastic gradient noise, agg_variation (delta squared)
    the drift introduced by aggregation, epsilon the target accuracy gap,
    and local_iters (E) the local steps per round.
    """

    lipschitz: float
    grad_variance: float
    agg_variation: float
    epsilon: float
    local_iters: int

    def __post_init__(self):
        values = (
            self.lipschitz,
            self.grad_variance,
            self.agg_variation,
            self.epsilon,
            self.local_iters,
        )
        if any(v <= 0 for v in values):
            raise ValueError(f"all constants must be positive, got {values}")


def lr_bound(constants: TheoryConstants) -> float:
    """Largest admissible learning rate, 2(eps - delta^2) / (L1 (eps + E sigma^2)).

    Raises ValueError when epsilon <= agg_variation: then no positive
    learning rate satisfies the bound.
    """
    gap = constants.epsilon - constants.agg_variation
    if gap <= 0:
        raise ValueError(
            "no admissible learning rate: epsilon must exceed the aggregation "
            f"variation ({constants.epsilon} <= {constants.agg_variation})"
        )
    denom = constants.lipschitz * (
        constants.epsilon + constants.local_iters * constants.grad_variance
    )
    return 2.0 * gap / denom


def init_global_model(
    input_dim: int, hidden_widths: tuple[int, ...], d1: int, classes: int,
    rng: np.random.Generator,
) -> GlobalSmallModel:
    extractor, header = init_model(ModelConfig(input_dim, tuple(hidden_widths), d1, classes), rng)
    return GlobalSmallModel(extractor, header)


def init_local_model(
    input_dim: int, hidden_widths: tuple[int, ...], d2: int, classes: int,
    rng: np.random.Generator,
) -> LocalHeteroModel:
    extractor, header = init_model(ModelConfig(input_dim, tuple(hidden_widths), d2, classes), rng)
    return LocalHeteroModel(extractor, header)


def init_projector(d1: int, d2: int, rng: np.random.Generator) -> Projector:
    """Xavier-uniform weights over the (d2, d1 + d2) mixing matrix."""
    if not 0 < d1 <= d2:
        raise ValueError(f"need 0 < d1 <= d2, got d1={d1}, d2={d2}")
    bound = np.sqrt(6.0 / (d1 + d2 + d2))
    return Projector(rng.uniform(-bound, bound, size=(d2, d1 + d2)))


def splice(rep_global: np.ndarray, rep_local: np.ndarray) -> np.ndarray:
    """Concatenate the two representations, global part first."""
    rep_global = as_matrix(rep_global)
    rep_local = as_matrix(rep_local, rows=rep_global.shape[0])
    return np.concatenate([rep_global, rep_local], axis=1)


def project(projector: Projector, spliced: np.ndarray) -> np.ndarray:
    """Mix a spliced batch down to d2 columns."""
    spliced = as_matrix(spliced, cols=projector.weight.shape[1])
    return matmul(spliced, projector.weight.T)


def matryoshka_prefixes(fused: np.ndarray, d1: int) -> tuple[np.ndarray, np.ndarray]:
    """Low-capacity prefix (first d1 columns) and the full-width row.

    The full-width view is the whole fused matrix itself; the nesting
    means the small head reads a strict prefix of what the large head
    reads.
    """
    fused = as_matrix(fused)
    if not 0 < d1 <= fused.shape[1]:
        raise ShapeError(f"prefix width {d1} out of range for {fused.shape[1]} columns")
    return fused[:, :d1], fused


@dataclass
class TrainingCache:
    """Everything one backward pass needs, tied to the exact objects used forward."""

    global_model: GlobalSmallModel
    local_model: LocalHeteroModel
    projector: Projector
    spliced: np.ndarray
    fused: np.ndarray
    cache_global: ForwardCache
    cache_local: ForwardCache
    dlogits_global: np.ndarray | None
    dlogits_local: np.ndarray
    weights: LossWeights
    n_samples: int
    use_mrl: bool


@dataclass
class GradientSet:
    """Loss gradients for all three parameter groups of one update."""

    global_layers: list[LayerGrads]
    global_header: np.ndarray
    local_layers: list[LayerGrads]
    local_header: np.ndarray
    projector: np.ndarray


def _check_dims(global_model: GlobalSmallModel, local_model: LocalHeteroModel,
                projector: Projector) -> tuple[int, int]:
    d1, d2 = global_model.rep_dim, local_model.rep_dim
    if d1 > d2:
        raise ShapeError(f"global width d1={d1} must not exceed local width d2={d2}")
    if projector.weight.shape != (d2, d1 + d2):
        raise ShapeError(
            f"projector shape {projector.weight.shape} != expected ({d2}, {d1 + d2})"
        )
    if global_model.classes != local_model.classes:
        raise ShapeError(
            f"headers disagree on classes: {global_model.classes} != {local_model.classes}"
        )
    return d1, d2


def forward_loss(
    global_model: GlobalSmallModel,
    local_model: LocalHeteroModel,
    projector: Projector,
    x: np.ndarray,
    labels: np.ndarray,
    weights: LossWeights = LossWeights(),
) -> tuple[float, tuple[float, float], TrainingCache]:
    """Dual-granularity training loss over a batch.

    Returns (total, (loss_global, loss_local), cache) where total is
    weights.global_head * loss_global + weights.local_head * loss_local
    and each part is the batch mean cross-entropy of its head.
    """
    d1, _ = _check_dims(global_model, local_model, projector)
    x = as_matrix(x)
    y = np.asarray(labels, dtype=np.int64).reshape(-1)

    rep_global, cache_global = global_model.extractor.forward(x)
    rep_local, cache_local = local_model.extractor.forward(x)
    spliced = splice(rep_global, rep_local)
    fused = project(projector, spliced)
    low, full = matryoshka_prefixes(fused, d1)

    losses_g, dlogits_g = batch_cross_entropy(global_model.header.forward(low), y)
    losses_f, dlogits_f = batch_cross_entropy(local_model.header.forward(full), y)
    loss_global = float(losses_g.mean())
    loss_local = float(losses_f.mean())
    total = weights.global_head * loss_global + weights.local_head * loss_local

    cache = TrainingCache(
        global_model=global_model,
        local_model=local_model,
        projector=projector,
        spliced=spliced,
        fused=fused,
        cache_global=cache_global,
        cache_local=cache_local,
        dlogits_global=dlogits_g,
        dlogits_local=dlogits_f,
        weights=weights,
        n_samples=x.shape[0],
        use_mrl=True,
    )
    return total, (loss_global, loss_local), cache


def forward_loss_ablation_no_mrl(
    global_model: GlobalSmallModel,
    local_model: LocalHeteroModel,
    projector: Projector,
    x: np.ndarray,
    labels: np.ndarray,
) -> tuple[float, TrainingCache]:
    """Ablated loss: the local header reads the whole fused row, no other head.

    The global extractor still contributes through the splice, but the
    global header is untouched by forward and gradient alike.  Equals
    forward_loss with weights (0, 1).
    """
    d1, _ = _check_dims(global_model, local_model, projector)
    x = as_matrix(x)
    y = np.asarray(labels, dtype=np.int64).reshape(-1)

    rep_global, cache_global = global_model.extractor.forward(x)
    rep_local, cache_local = local_model.extractor.forward(x)
    spliced = splice(rep_global, rep_local)
    fused = project(projector, spliced)

    losses, dlogits = batch_cross_entropy(local_model.header.forward(fused), y)
    cache = TrainingCache(
        global_model=global_model,
        local_model=local_model,
        projector=projector,
        spliced=spliced,
        fused=fused,
        cache_global=cache_global,
        cache_local=cache_local,
        dlogits_global=None,
        dlogits_local=dlogits,
        weights=LossWeights(0.0, 1.0),
        n_samples=x.shape[0],
        use_mrl=False,
    )
    return float(losses.mean()), cache


def loss_gradients(cache: TrainingCache) -> GradientSet:
    """Hand-derived gradients of the cached loss for all parameter groups.

    The fused row has two consumers in the dual-head loss; their
    gradients meet by zero-padding the prefix gradient to full width.
    The projector then routes the fused gradient back to both extractors
    by splitting the spliced gradient at column d1.
    """
    g, f, p = cache.global_model, cache.local_model, cache.projector
    d1 = g.rep_dim
    n = cache.n_samples

    d_local_logits = (cache.weights.local_head / n) * cache.dlogits_local
    if cache.use_mrl:
        low = cache.fused[:, :d1]
        d_global_logits = (cache.weights.global_head / n) * cache.dlogits_global
        d_global_header, d_low = g.header.backward(low, d_global_logits)
        d_local_header, d_fused = f.header.backward(cache.fused, d_local_logits)
        d_fused = d_fused.copy()
        d_fused[:, :d1] += d_low
    else:
        d_global_header = np.zeros_like(g.header.weight)
        d_local_header, d_fused = f.header.backward(cache.fused, d_local_logits)

    d_projector = matmul(d_fused.T, cache.spliced)
    d_spliced = matmul(d_fused, p.weight)
    global_layers, _ = g.extractor.backward(cache.cache_global, d_spliced[:, :d1])
    local_layers, _ = f.extractor.backward(cache.cache_local, d_spliced[:, d1:])
    return GradientSet(
        global_layers=global_layers,
        global_header=d_global_header,
        local_layers=local_layers,
        local_header=d_local_header,
        projector=d_projector,
    )


def backward_and_step(
    global_model: GlobalSmallModel,
    local_model: LocalHeteroModel,
    projector: Projector,
    cache: TrainingCache,
    lrs: LearningRates,
) -> tuple[GlobalSmallModel, LocalHeteroModel, Projector]:
    """One simultaneous SGD step on all three parameter groups.

    Returns fresh objects; the inputs are left untouched, and the cache
    must have been produced by exactly these objects (a cache from a
    previous step is stale and rejected).
    """
    if (
        cache.global_model is not global_model
        or cache.local_model is not local_model
        or cache.projector is not projector
    ):
        raise StaleCacheError("cache was not produced by these models")
    grads = loss_gradients(cache)
    new_global = GlobalSmallModel(
        global_model.extractor.step(grads.global_layers, lrs.global_model),
        global_model.header.step(grads.global_header, lrs.global_model),
    )
    new_local = LocalHeteroModel(
        local_model.extractor.step(grads.local_layers, lrs.local_model),
        local_model.header.step(grads.local_header, lrs.local_model),
    )
    new_projector = Projector(sgd_step(projector.weight, grads.projector, lrs.projector))
    return new_global, new_local, new_projector


def forward_loss_single(
    model: LocalHeteroModel | GlobalSmallModel, x: np.ndarray, labels: np.ndarray
) -> tuple[float, tuple]:
    """Plain one-model cross-entropy loss (no splice, no projector)."""
    x = as_matrix(x)
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    rep, cache_ex = model.extractor.forward(x)
    losses, dlogits = batch_cross_entropy(model.header.forward(rep), y)
    return float(losses.mean()), (model, rep, cache_ex, dlogits, x.shape[0])


def backward_and_step_single(model, cache, lr: float):
    """SGD step for the plain one-model loss; same staleness rule as above."""
    owner, rep, cache_ex, dlogits, n = cache
    if owner is not model:
        raise StaleCacheError("cache was not produced by this model")
    d_header, d_rep = model.header.backward(rep, dlogits / n)
    layer_grads, _ = model.extractor.backward(cache_ex, d_rep)
    stepped = type(model)(
        model.extractor.step(layer_grads, lr), model.header.step(d_header, lr)
    )
    return stepped


def parameter_vector(
    global_model: GlobalSmallModel, local_model: LocalHeteroModel, projector: Projector
) -> np.ndarray:
    """Flatten all trainable parameters into one vector.

    Order: global extractor layers (weight then bias, first to last),
    global header, local extractor layers, local header, projector.
    """
    parts = []
    for model in (global_model, local_model):
        for layer in model.extractor.layers:
            parts.append(layer.weight.ravel())
            if layer.bias is not None:
                parts.append(layer.bias.ravel())
        parts.append(model.header.weight.ravel())
    parts.append(projector.weight.ravel())
    return np.concatenate(parts)


def with_parameter_vector(
    global_model: GlobalSmallModel,
    local_model: LocalHeteroModel,
    projector: Projector,
    vec: np.ndarray,
) -> tuple[GlobalSmallModel, LocalHeteroModel, Projector]:
    """Rebuild models of the same architecture from a parameter_vector."""
    vec = np.asarray(vec, dtype=np.float64).reshape(-1)
    expected = (
        global_model.param_count() + local_model.param_count() + projector.param_count()
    )
    if vec.size != expected:
        raise ShapeError(f"vector length {vec.size} does not match the models ({expected})")
    pos = 0

    def take(shape):
        nonlocal pos
        size = int(np.prod(shape))
        block = vec[pos : pos + size].reshape(shape)
        pos += size
        return block

    rebuilt = []
    for model in (global_model, local_model):
        layers = []
        for layer in model.extractor.layers:
            w = take(layer.weight.shape)
            b = take(layer.bias.shape) if layer.bias is not None else None
            layers.append(AffineLayer(w, b, layer.activation))
        header = Header(take(model.header.weight.shape))
        rebuilt.append((Extractor(layers), header))
    new_projector = Projector(take(projector.weight.shape))
    if pos != vec.size:
        raise ShapeError(f"vector length {vec.size} does not match the models ({pos})")
    return (
        GlobalSmallModel(*rebuilt[0]),
        LocalHeteroModel(*rebuilt[1]),
        new_projector,
    )


def gradient_vector(grads: GradientSet) -> np.ndarray:
    """Flatten a GradientSet in the parameter_vector order."""
    parts = []
    for layer_grads, header in (
        (grads.global_layers, grads.global_header),
        (grads.local_layers, grads.local_header),
    ):
        for g in layer_grads:
            parts.append(g.weight.ravel())
            if g.bias is not None:
                parts.append(g.bias.ravel())
        parts.append(header.ravel())
    parts.append(grads.projector.ravel())
    return np.concatenate(parts)


def infer(
    global_model: GlobalSmallModel,
    local_model: LocalHeteroModel,
    projector: Projector,
    x: np.ndarray,
    variant: InferenceVariant = InferenceVariant.MIX_LARGE,
) -> np.ndarray:
    """Predicted class indices for a batch under the chosen serving variant.

    Ties in the logits resolve to the lowest class index.  The MIX
    variants never read the header they exclude; the SINGLE variants
    never touch the other model or the projector.
    """
    x = as_matrix(x)
    if variant is InferenceVariant.SINGLE_SMALL:
        rep, _ = global_model.extractor.forward(x)
        logits = global_model.header.forward(rep)
    elif variant is InferenceVariant.SINGLE_LARGE:
        rep, _ = local_model.extractor.forward(x)
        logits = local_model.header.forward(rep)
    else:
        d1, _ = _check_dims(global_model, local_model, projector)
        rep_global, _ = global_model.extractor.forward(x)
        rep_local, _ = local_model.extractor.forward(x)
        fused = project(projector, splice(rep_global, rep_local))
        if variant is InferenceVariant.MIX_SMALL:
            logits = global_model.header.forward(fused[:, :d1])
        else:
            logits = local_model.header.forward(fused)
    return np.argmax(logits, axis=1)
