"""This file handles the classifier and finder networks for the models part.

All forwards are functional: they read parameters from ``self.params``
unless a mapping of replacement tensors is passed in, which is how the
meta-learning code evaluates a model at virtual parameters without
touching the real ones.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence

import numpy as np

from mgrlab.diffcore import RngStream, Tensor, ops
from mgrlab.models.errors import ModelError

FINDER_VARIANTS = (
    "residual-mlp",
    "linear",
    "plain-mlp",
    "residual-shallow",
    "identity",
)

Params = Mapping[str, Tensor]


# ---------------------------------------------------------------------------
# Parameter containers
# ---------------------------------------------------------------------------

# This class keeps the module data and behavior in one place.
class Module:
    """Ordered collection of named parameter tensors."""

    def __init__(self) -> None:
        self.params: dict[str, Tensor] = {}

    def _add(self, name: str, values: np.ndarray) -> None:
        self.params[name] = Tensor(values, requires_grad=True, name=name)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return list(self.params.items())

    def bind(self, tensors: Sequence[Tensor]) -> dict[str, Tensor]:
        """Map replacement tensors onto this module's parameter names."""
        if len(tensors) != len(self.params):
            raise ModelError(
                f"expected {len(self.params)} tensors, got {len(tensors)}"
            )
        return dict(zip(self.params, tensors, strict=True))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.values.copy() for name, p in self.params.items()}

    def load_state_dict(self, arrays: Mapping[str, np.ndarray]) -> None:
        for name, param in self.params.items():
            if name not in arrays:
                raise ModelError(f"missing parameter '{name}'")
            values = np.asarray(arrays[name], dtype=np.float64)
            if values.shape != param.shape:
                raise ModelError(
                    f"parameter '{name}' has shape {values.shape}, "
                    f"expected {param.shape}"
                )
            param.values[...] = values

    def _resolve(self, params: Params | None) -> Params:
        return self.params if params is None else params


def _he_normal(rng: RngStream, fan_in: int, fan_out: int) -> np.ndarray:
    return rng.normal((fan_in, fan_out), scale=np.sqrt(2.0 / fan_in))


def _check_input(x: Tensor, dim: int, what: str) -> None:
    if x.ndim != 2 or x.shape[1] != dim:
        raise ModelError(
            f"{what} expects inputs of shape (batch, {dim}), got {x.shape}"
        )


# ---------------------------------------------------------------------------
# Classifier
# ---------------------------------------------------------------------------

# This class keeps the feature extractor data and behavior in one place.
class FeatureExtractor(Module):
    """MLP g_psi: input-dim -> hidden widths -> feature-dim."""

    def __init__(
        self,
        input_dim: int,
        hidden: Sequence[int],
        feature_dim: int,
        rng: RngStream,
        slope: float = 0.01,
    ) -> None:
        super().__init__()
        self.input_dim = input_dim
        self.feature_dim = feature_dim
        self.slope = slope
        widths = [input_dim, *hidden, feature_dim]
        self.depth = len(widths) - 1
        for i, (fan_in, fan_out) in enumerate(zip(widths, widths[1:])):
            self._add(f"layer{i}.weight", _he_normal(rng, fan_in, fan_out))
            self._add(f"layer{i}.bias", np.zeros(fan_out))

    def forward(self, x: Tensor, params: Params | None = None) -> Tensor:
        _check_input(x, self.input_dim, "feature extractor")
        p = self._resolve(params)
        h = x
        for i in range(self.depth):
            weight, bias = p[f"layer{i}.weight"], p[f"layer{i}.bias"]
            h = ops.add(ops.matmul(h, weight), bias)
            h = ops.leaky_relu(h, self.slope)
        return h


# This class keeps the head data and behavior in one place.
class Head(Module):
    """Single affine map h_omega: feature-dim -> class-count."""

    def __init__(
        self,
        feature_dim: int,
        num_classes: int,
        rng: RngStream,
    ) -> None:
        super().__init__()
        self.feature_dim = feature_dim
        self.num_classes = num_classes
        self._add(
            "weight",
            rng.normal(
                (feature_dim, num_classes), scale=np.sqrt(1.0 / feature_dim)
            ),
        )
        self._add("bias", np.zeros(num_classes))

    def forward(self, h: Tensor, params: Params | None = None) -> Tensor:
        p = self._resolve(params)
        return ops.add(ops.matmul(h, p["weight"]), p["bias"])


# This class keeps the main model data and behavior in one place.
class MainModel(Module):
    """f_theta = h_omega o g_psi, with the optional GDA+MH pseudo head."""

    def __init__(
        self,
        extractor: FeatureExtractor,
        head: Head,
        aux_head: Head | None = None,
    ) -> None:
        super().__init__()
        self.extractor = extractor
        self.head = head
        self.aux_head = aux_head
        parts = [("extractor", extractor), ("head", head)]
        if aux_head is not None:
            parts.append(("aux_head", aux_head))
        for prefix, module in parts:
            for name, tensor in module.named_parameters():
                self.params[f"{prefix}.{name}"] = tensor

    @property
    def num_classes(self) -> int:
        return self.head.num_classes

    def _sub(self, params: Params | None, prefix: str) -> Params | None:
        if params is None:
            return None
        cut = len(prefix) + 1
        return {
            name[cut:]: tensor
            for name, tensor in params.items()
            if name.startswith(prefix + ".")
        }

    def extractor_parameters(self) -> list[Tensor]:
        return self.extractor.parameters()

    def head_parameters(self) -> list[Tensor]:
        return self.head.parameters()

    def features(self, x: Tensor, params: Params | None = None) -> Tensor:
        return self.extractor.forward(x, self._sub(params, "extractor"))

    def classify(self, x: Tensor, params: Params | None = None) -> Tensor:
        return self.head.forward(
            self.features(x, params), self._sub(params, "head")
        )

    def classify_aux(
        self, x: Tensor, params: Params | None = None
    ) -> Tensor:
        if self.aux_head is None:
            raise ModelError("model was built without an auxiliary head")
        return self.aux_head.forward(
            self.features(x, params), self._sub(params, "aux_head")
        )


# This function builds the main model work used in this file.
def build_main_model(
    input_dim: int,
    hidden: Sequence[int],
    feature_dim: int,
    num_classes: int,
    rng: RngStream,
    with_aux_head: bool = False,
) -> MainModel:
    extractor = FeatureExtractor(
        input_dim, hidden, feature_dim, rng.child("extractor")
    )
    head = Head(feature_dim, num_classes, rng.child("head"))
    aux = (
        Head(feature_dim, num_classes, rng.child("aux_head"))
        if with_aux_head
        else None
    )
    return MainModel(extractor, head, aux)


# This function extracts the features work used in this file.
def extract(
    x: Tensor, extractor: FeatureExtractor, params: Params | None = None
) -> Tensor:
    return extractor.forward(x, params)


# This function classifies the inputs work used in this file.
def classify(
    x: Tensor, model: MainModel, params: Params | None = None
) -> Tensor:
    return model.classify(x, params)


# ---------------------------------------------------------------------------
# Finder
# ---------------------------------------------------------------------------

# This class keeps the finder data and behavior in one place.
class Finder(Module):
    """Latent-to-latent map F_phi.

    ``residual-mlp`` is ``z + tanh(MLP(z))`` with a zero final layer, so a
    fresh finder is the identity.  ``residual-shallow`` and ``linear`` also
    start at the identity; ``plain-mlp`` does not.
    """

    def __init__(
        self,
        variant: str,
        latent_dim: int,
        rng: RngStream,
        hidden: int | None = None,
        slope: float = 0.01,
    ) -> None:
        super().__init__()
        if variant not in FINDER_VARIANTS:
            raise ModelError(
                f"unknown finder variant '{variant}', expected one of "
                f"{', '.join(FINDER_VARIANTS)}"
            )
        self.variant = variant
        self.latent_dim = latent_dim
        self.hidden = hidden or 2 * latent_dim
        self.slope = slope
        d, h = latent_dim, self.hidden

        if variant in ("residual-mlp", "plain-mlp"):
            self._add("layer0.weight", _he_normal(rng, d, h))
            self._add("layer0.bias", np.zeros(h))
            self._add("layer1.weight", _he_normal(rng, h, h))
            self._add("layer1.bias", np.zeros(h))
            last = (
                np.zeros((h, d))
                if variant == "residual-mlp"
                else _he_normal(rng, h, d)
            )
            self._add("layer2.weight", last)
            self._add("layer2.bias", np.zeros(d))
        elif variant == "linear":
            self._add("weight", np.eye(d))
            self._add("bias", np.zeros(d))
        elif variant == "residual-shallow":
            self._add("weight", np.zeros((d, d)))
            self._add("bias", np.zeros(d))

    @property
    def is_residual(self) -> bool:
        return self.variant in ("residual-mlp", "residual-shallow")

    def _mlp(self, z: Tensor, p: Params) -> Tensor:
        h = z
        for i in range(3):
            weight, bias = p[f"layer{i}.weight"], p[f"layer{i}.bias"]
            h = ops.add(ops.matmul(h, weight), bias)
            if i < 2:
                h = ops.leaky_relu(h, self.slope)
        return h

    def forward(self, z: Tensor, params: Params | None = None) -> Tensor:
        _check_input(z, self.latent_dim, "finder")
        p = self._resolve(params)
        match self.variant:
            case "identity":
                return z
            case "residual-mlp":
                return ops.add(z, ops.tanh(self._mlp(z, p)))
            case "plain-mlp":
                return self._mlp(z, p)
            case "linear":
                return ops.add(ops.matmul(z, p["weight"]), p["bias"])
            case "residual-shallow":
                return ops.add(
                    z,
                    ops.tanh(ops.add(ops.matmul(z, p["weight"]), p["bias"])),
                )
        raise ModelError(f"unknown finder variant '{self.variant}'")


# This function finds the latent work used in this file.
def find(
    z: Tensor,
    finder: Finder,
    params: Params | None = None,
) -> Tensor:
    return finder.forward(z, params)
