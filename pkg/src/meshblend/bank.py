"""Exemplar bank: the image memory behind the analytic attention denoiser.

Patches of every class image are embedded as
``[pixel values, 1, gain * positional one-hot]`` and projected by one
seeded orthogonal matrix shared as W_Q, W_K and W_V. Tying the three
projections keeps projected dot products equal to raw feature dot
products, which is what makes the cross-attention softmax an exact
(smoothed-query) posterior over exemplars; adapters then perturb W_K and
W_V independently around the tie, LoRA-style, for fine-tuned tokens.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import BankError

SCHEMA_VERSION = 1
DEFAULT_PATCH_SIZE = 4
DEFAULT_POS_GAIN = 4.0
ADAPTER_RANK = 4


@dataclass(frozen=True)
class PromptToken:
    """Conditioning for the denoiser.

    kind: "class" | "null" | "inverted" | "adapter".
    class_weights: per-class weights; one-hot for class tokens, a simplex
    vector for inverted tokens, ignored for null/adapter.
    """

    kind: str
    class_name: Optional[str] = None
    class_weights: Optional[dict] = None
    adapter_id: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("class", "null", "inverted", "adapter"):
            raise BankError(f"unknown token kind {self.kind!r}")
        if self.kind == "class" and not self.class_name:
            raise BankError("class token needs class_name")
        if self.kind == "inverted":
            if not self.class_weights:
                raise BankError("inverted token needs class_weights")
            total = sum(self.class_weights.values())
            if any(w < 0 for w in self.class_weights.values()):
                raise BankError("inverted weights must be nonnegative")
            if abs(total - 1.0) > 1e-9:
                raise BankError(f"inverted weights must sum to 1, got {total}")
        if self.kind == "adapter" and not self.adapter_id:
            raise BankError("adapter token needs adapter_id")


def class_token(name: str) -> PromptToken:
    return PromptToken("class", class_name=name, class_weights={name: 1.0})


def null_token() -> PromptToken:
    return PromptToken("null")


def adapter_token(adapter_id: str) -> PromptToken:
    return PromptToken("adapter", adapter_id=adapter_id)


@dataclass
class Adapter:
    """Low-rank additive corrections to the cross-attention key/value
    projections, plus the exemplar class registered with them."""

    class_name: str
    a_k: np.ndarray
    b_k: np.ndarray
    a_v: np.ndarray
    b_v: np.ndarray

    def delta_k(self) -> np.ndarray:
        return self.a_k @ self.b_k

    def delta_v(self) -> np.ndarray:
        return self.a_v @ self.b_v


def _orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def extract_patches(image: np.ndarray, patch: int) -> np.ndarray:
    """(grid*grid, patch*patch) row-major patches of a square image."""
    h, w = image.shape
    if h != w or h % patch:
        raise BankError(f"image shape {image.shape} not divisible by patch {patch}")
    g = h // patch
    return (image.reshape(g, patch, g, patch)
            .transpose(0, 2, 1, 3).reshape(g * g, patch * patch))


def assemble_patches(patches: np.ndarray, patch: int) -> np.ndarray:
    g = int(np.sqrt(len(patches)))
    return (patches.reshape(g, g, patch, patch)
            .transpose(0, 2, 1, 3).reshape(g * patch, g * patch))


class ExemplarBank:
    """Classes of same-shape exemplar images with fixed seeded projections."""

    def __init__(self, classes: dict, seed: int,
                 patch_size: int = DEFAULT_PATCH_SIZE,
                 pos_gain: float = DEFAULT_POS_GAIN):
        if not classes:
            raise BankError("bank needs at least one class")
        self.seed = int(seed)
        self.patch_size = int(patch_size)
        self.pos_gain = float(pos_gain)
        shapes = set()
        self.classes: dict[str, np.ndarray] = {}
        for name in sorted(classes):
            imgs = np.asarray(classes[name], dtype=np.float64)
            if imgs.ndim == 2:
                imgs = imgs[None]
            if imgs.ndim != 3 or imgs.shape[0] < 1:
                raise BankError(f"class {name!r} needs >= 1 same-shape image")
            shapes.add(imgs.shape[1:])
            self.classes[name] = imgs
        if len(shapes) != 1:
            raise BankError(f"classes disagree on image shape: {sorted(shapes)}")
        self.image_shape = shapes.pop()
        if self.image_shape[0] != self.image_shape[1]:
            raise BankError("exemplar images must be square")
        if self.image_shape[0] % self.patch_size:
            raise BankError(
                f"image side {self.image_shape[0]} not divisible by patch "
                f"size {self.patch_size}")
        self.grid = self.image_shape[0] // self.patch_size
        self.n_patches = self.grid * self.grid
        self.pixels_per_patch = self.patch_size ** 2
        # embedding: [pixels | bias slot | positional one-hot * gain]
        self.embed_dim = self.pixels_per_patch + 1 + self.n_patches
        rng = np.random.default_rng(self.seed)
        w = _orthogonal(self.embed_dim, rng)
        self.w_q = w
        self.w_k = w
        self.w_v = w
        self.adapters: dict[str, Adapter] = {}
        self._patch_cache: dict[str, np.ndarray] = {
            name: np.stack([extract_patches(im, self.patch_size) for im in imgs])
            for name, imgs in self.classes.items()
        }

    # --- embeddings ---------------------------------------------------------

    def embed_image(self, image: np.ndarray) -> np.ndarray:
        """Query-side patch embedding of an image, (n_patches, embed_dim)."""
        p = extract_patches(np.asarray(image, dtype=np.float64), self.patch_size)
        return self._embed(p)

    def _embed(self, patches: np.ndarray) -> np.ndarray:
        n = len(patches)
        out = np.zeros((n, self.embed_dim))
        out[:, :self.pixels_per_patch] = patches
        out[:, self.pixels_per_patch] = 1.0
        out[:, self.pixels_per_patch + 1:] = self.pos_gain * np.eye(self.n_patches)[:n]
        return out

    def exemplar_patches(self, name: str) -> np.ndarray:
        """(n_exemplars, n_patches, pixels) pixel patches of a class."""
        if name not in self._patch_cache:
            raise BankError(f"unknown class {name!r}")
        return self._patch_cache[name]

    def key_features(self, patches: np.ndarray, alpha_bar: float) -> np.ndarray:
        """Exemplar-side key features at noise level alpha_bar.

        Built so that (query embed) . (key feature) equals
        2 sqrt(ab) z.x - ab |x|^2, i.e. the negated squared distance between
        the query patch and the noised-mean exemplar patch up to a
        row-constant. Positional slots are zero: they never leak into
        cross-attention scores.
        """
        k, p, d = patches.shape
        out = np.zeros((k, p, self.embed_dim))
        out[..., :self.pixels_per_patch] = 2.0 * np.sqrt(alpha_bar) * patches
        out[..., self.pixels_per_patch] = -alpha_bar * (patches ** 2).sum(axis=-1)
        return out

    def value_features(self, patches: np.ndarray) -> np.ndarray:
        """Exemplar-side value features: clean patch embeddings."""
        k, p, _ = patches.shape
        out = np.zeros((k, p, self.embed_dim))
        out[..., :self.pixels_per_patch] = patches
        out[..., self.pixels_per_patch] = 1.0
        out[..., self.pixels_per_patch + 1:] = self.pos_gain * np.eye(self.n_patches)[None, :p]
        return out

    # --- tokens -------------------------------------------------------------

    def resolve_token(self, token: PromptToken):
        """(stacked exemplar patches, per-exemplar log-weight bias, adapter).

        Null tokens use the union of every class; inverted tokens bias each
        class's exemplars by log weight; adapter tokens restrict to the
        registered render class and activate the low-rank corrections.
        """
        if token.kind == "class":
            patches = self.exemplar_patches(token.class_name)
            return patches, np.zeros(len(patches)), None
        if token.kind == "null":
            stacks = [self._patch_cache[n] for n in sorted(self._patch_cache)]
            patches = np.concatenate(stacks)
            return patches, np.zeros(len(patches)), None
        if token.kind == "inverted":
            stacks, biases = [], []
            for name in sorted(self._patch_cache):
                w = float(token.class_weights.get(name, 0.0))
                s = self._patch_cache[name]
                stacks.append(s)
                with np.errstate(divide="ignore"):
                    biases.append(np.full(len(s), np.log(w) if w > 0 else -np.inf))
            return np.concatenate(stacks), np.concatenate(biases), None
        if token.kind == "adapter":
            if token.adapter_id not in self.adapters:
                raise BankError(f"unknown adapter id {token.adapter_id!r}")
            ad = self.adapters[token.adapter_id]
            patches = self.exemplar_patches(ad.class_name)
            return patches, np.zeros(len(patches)), ad
        raise BankError(f"cannot resolve token kind {token.kind!r}")

    def register_class(self, name: str, images: np.ndarray) -> None:
        imgs = np.asarray(images, dtype=np.float64)
        if imgs.ndim == 2:
            imgs = imgs[None]
        if imgs.shape[1:] != self.image_shape:
            raise BankError(
                f"class {name!r}: image shape {imgs.shape[1:]} does not match "
                f"bank shape {self.image_shape}")
        if name in self.classes:
            raise BankError(f"class {name!r} already registered")
        self.classes[name] = imgs
        self._patch_cache[name] = np.stack(
            [extract_patches(im, self.patch_size) for im in imgs])

    def class_names(self) -> list:
        return sorted(self.classes)

    # --- serialization ------------------------------------------------------

    def save(self, path) -> None:
        payload = {
            "schema_version": np.int64(SCHEMA_VERSION),
            "seed": np.int64(self.seed),
            "patch_size": np.int64(self.patch_size),
            "pos_gain": np.float64(self.pos_gain),
            "class_names": np.array(self.class_names()),
            "adapter_ids": np.array(sorted(self.adapters)),
        }
        for name in self.class_names():
            payload[f"class_{name}"] = self.classes[name]
        for aid in sorted(self.adapters):
            ad = self.adapters[aid]
            payload[f"adapter_{aid}_class"] = np.array(ad.class_name)
            for part in ("a_k", "b_k", "a_v", "b_v"):
                payload[f"adapter_{aid}_{part}"] = getattr(ad, part)
        np.savez(path, **payload)

    @classmethod
    def load(cls, path) -> "ExemplarBank":
        with np.load(path, allow_pickle=False) as z:
            if int(z["schema_version"]) != SCHEMA_VERSION:
                raise BankError(
                    f"bank schema {int(z['schema_version'])} != {SCHEMA_VERSION}")
            names = [str(n) for n in z["class_names"]]
            classes = {n: z[f"class_{n}"] for n in names}
            bank = cls(classes, seed=int(z["seed"]),
                       patch_size=int(z["patch_size"]),
                       pos_gain=float(z["pos_gain"]))
            aids = sorted({k.split("_")[1] for k in z.files if k.startswith("adapter_")})
            for aid in aids:
                bank.adapters[aid] = Adapter(
                    class_name=str(z[f"adapter_{aid}_class"]),
                    a_k=z[f"adapter_{aid}_a_k"], b_k=z[f"adapter_{aid}_b_k"],
                    a_v=z[f"adapter_{aid}_a_v"], b_v=z[f"adapter_{aid}_b_v"])
        return bank


def build_exemplar_bank(classes: dict, seed: int,
                        patch_size: int = DEFAULT_PATCH_SIZE,
                        pos_gain: float = DEFAULT_POS_GAIN) -> ExemplarBank:
    """Deterministic bank over ``{class name: (N, H, W) images}``."""
    return ExemplarBank(classes, seed=seed, patch_size=patch_size, pos_gain=pos_gain)
