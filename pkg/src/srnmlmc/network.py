"""Reaction networks with mass-action propensities, and scalar observables.

A network is stored as dense integer matrices: ``stoich`` (net change, J x d)
and ``reactant_order`` (molecules consumed, J x d), plus the rate vector.
Both matrices are derived from reactant/product dictionaries so they can never
disagree with each other.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

INT64_MAX = np.iinfo(np.int64).max
INT64_MIN = np.iinfo(np.int64).min


@dataclass(frozen=True)
class ReactionNetwork:
    species_names: tuple[str, ...]
    stoich: np.ndarray
    reactant_order: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        stoich = np.asarray(self.stoich, dtype=np.int64)
        order = np.asarray(self.reactant_order, dtype=np.int64)
        rates = np.asarray(self.rates, dtype=np.float64)
        if stoich.ndim != 2 or stoich.shape != order.shape:
            raise ValueError("stoich and reactant_order must be J x d matrices of equal shape")
        if stoich.shape[1] != len(self.species_names):
            raise ValueError("species_names does not match the number of columns")
        if rates.shape != (stoich.shape[0],):
            raise ValueError("one rate per reaction is required")
        if np.any(order < 0):
            raise ValueError("reactant orders must be non-negative")
        if not np.all(np.isfinite(rates)) or np.any(rates <= 0):
            raise ValueError("rates must be positive and finite")
        for name, arr in (("stoich", stoich), ("reactant_order", order), ("rates", rates)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "species_names", tuple(self.species_names))

    @classmethod
    def from_reactions(cls, species: Sequence[str], reactions: Sequence[Mapping]) -> "ReactionNetwork":
        """Build from ``{"reactants": {...}, "products": {...}, "rate": k}`` entries."""
        index = {name: i for i, name in enumerate(species)}
        if len(index) != len(species):
            raise ValueError("duplicate species names")
        d, J = len(species), len(reactions)
        reactants = np.zeros((J, d), dtype=np.int64)
        products = np.zeros((J, d), dtype=np.int64)
        rates = np.zeros(J)
        for j, rxn in enumerate(reactions):
            for side, target in (("reactants", reactants), ("products", products)):
                for name, count in (rxn.get(side) or {}).items():
                    if name not in index:
                        raise ValueError(f"reaction {j + 1}: unknown species {name!r}")
                    if int(count) != count or count < 0:
                        raise ValueError(f"reaction {j + 1}: bad count {count!r} for {name!r}")
                    target[j, index[name]] += int(count)
            rates[j] = float(rxn["rate"])
        return cls(tuple(species), products - reactants, reactants, rates)

    @property
    def num_species(self) -> int:
        return self.stoich.shape[1]

    @property
    def num_reactions(self) -> int:
        return self.stoich.shape[0]

    @property
    def products(self) -> np.ndarray:
        return self.stoich + self.reactant_order

    def species_index(self, name_or_index) -> int:
        if isinstance(name_or_index, (int, np.integer)):
            i = int(name_or_index)
        elif name_or_index in self.species_names:
            i = self.species_names.index(name_or_index)
        else:
            raise KeyError(f"unknown species {name_or_index!r}")
        if not 0 <= i < self.num_species:
            raise IndexError(f"species index {i} out of range")
        return i

    def reactions_as_dicts(self) -> list[dict]:
        out = []
        prod = self.products
        for j in range(self.num_reactions):
            out.append({
                "reactants": {s: int(c) for s, c in zip(self.species_names, self.reactant_order[j]) if c},
                "products": {s: int(c) for s, c in zip(self.species_names, prod[j]) if c},
                "rate": float(self.rates[j]),
            })
        return out


def as_state(x, num_species: int | None = None) -> np.ndarray:
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise ValueError("state must be a 1-d integer vector")
    if arr.dtype.kind not in "iu":
        as_float = arr.astype(np.float64)
        if not np.all(as_float == np.round(as_float)):
            raise ValueError("state must hold integer counts")
        arr = as_float
    arr = arr.astype(np.int64, copy=False)
    if num_species is not None and arr.shape[0] != num_species:
        raise ValueError(f"state has {arr.shape[0]} species, network has {num_species}")
    return arr


def propensities(net: ReactionNetwork, x) -> np.ndarray:
    """Mass-action propensities ``theta_j * prod_i x_i (x_i-1) ... (x_i-alpha_ji+1)``.

    A reaction is switched off when one of its reactants has fewer copies than
    it consumes, negative counts from a tau-leap overshoot included. Species a
    reaction does not consume never gate it.
    """
    x = as_state(x, net.num_species)
    J, d = net.stoich.shape
    out = np.empty(J)
    for j in range(J):
        a = float(net.rates[j])
        for i in range(d):
            order = int(net.reactant_order[j, i])
            if order == 0:
                continue
            xi = int(x[i])
            if xi < order:
                a = 0.0
                break
            for m in range(order):
                a *= float(xi - m)
        out[j] = a
    return out


def apply_firings(net: ReactionNetwork, x, k) -> np.ndarray:
    """Return ``x + sum_j k_j nu_j``; raises OverflowError instead of wrapping."""
    x = as_state(x, net.num_species)
    k = np.asarray(k)
    if k.shape != (net.num_reactions,):
        raise ValueError("one firing count per reaction is required")
    if np.any(k < 0):
        raise ValueError("firing counts must be non-negative")
    # exact arithmetic on Python ints, then range-check
    result = [int(xi) for xi in x]
    for j, kj in enumerate(k.tolist()):
        if kj:
            for i in range(net.num_species):
                result[i] += int(kj) * int(net.stoich[j, i])
    if any(v > INT64_MAX or v < INT64_MIN for v in result):
        raise OverflowError("species count exceeds the int64 range")
    return np.array(result, dtype=np.int64)


@dataclass(frozen=True)
class Observable:
    """Scalar functional of the state: a projection or a linear map."""

    kind: str
    index: int = -1
    weights: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in ("projection", "linear"):
            raise ValueError(f"unknown observable kind {self.kind!r}")
        if self.kind == "projection" and self.index < 0:
            raise ValueError("projection needs a non-negative species index")
        if self.kind == "linear" and not self.weights:
            raise ValueError("linear observable needs weights")

    @classmethod
    def projection(cls, index: int) -> "Observable":
        return cls("projection", index=int(index))

    @classmethod
    def linear(cls, weights) -> "Observable":
        return cls("linear", weights=tuple(float(w) for w in weights))

    def weight_vector(self, num_species: int) -> np.ndarray:
        if self.kind == "projection":
            if self.index >= num_species:
                raise IndexError(f"projection index {self.index} out of range for {num_species} species")
            w = np.zeros(num_species)
            w[self.index] = 1.0
            return w
        if len(self.weights) != num_species:
            raise ValueError("weight vector length does not match the state dimension")
        return np.array(self.weights)

    def describe(self, net: ReactionNetwork | None = None) -> str:
        if self.kind == "projection":
            name = net.species_names[self.index] if net is not None else str(self.index)
            return f"proj:{name}"
        return "lin:" + ",".join(f"{w:g}" for w in self.weights)

    @classmethod
    def parse(cls, text: str, net: ReactionNetwork) -> "Observable":
        """Parse ``proj:<name|1-based index>``, ``lin:w1,w2,...`` or a bare species name."""
        text = text.strip()
        kind, _, body = text.partition(":")
        if not body:
            kind, body = "proj", text
        if kind in ("proj", "projection"):
            if body in net.species_names:
                return cls.projection(net.species_names.index(body))
            try:
                one_based = int(body)
            except ValueError:
                raise ValueError(f"unknown species {body!r}") from None
            if not 1 <= one_based <= net.num_species:
                raise IndexError(f"species index {one_based} out of range")
            return cls.projection(one_based - 1)
        if kind in ("lin", "linear"):
            return cls.linear([float(w) for w in body.split(",")])
        raise ValueError(f"cannot parse observable {text!r}")


def observe(g: Observable, x):
    """Value of the observable; an exact int for projections."""
    x = np.asarray(x)
    if x.ndim != 1:
        raise ValueError("state must be a 1-d vector")
    if g.kind == "projection":
        if g.index >= x.shape[0]:
            raise IndexError(f"projection index {g.index} out of range for {x.shape[0]} species")
        return int(x[g.index])
    w = g.weight_vector(x.shape[0])
    return float(np.dot(w, x))


def sensitive_set(g: Observable, net: ReactionNetwork) -> frozenset[int]:
    """Reactions whose firing changes the observable (0-based indices).

    For a linear observable g(x + nu_j) - g(x) = w . nu_j does not depend on x.
    """
    w = g.weight_vector(net.num_species)
    change = net.stoich.astype(np.float64) @ w
    return frozenset(int(j) for j in np.flatnonzero(change != 0.0))


# ---------------------------------------------------------------------------
# model files

@dataclass(frozen=True)
class ModelSpec:
    """A network plus everything needed to run it from a model file."""

    name: str
    network: ReactionNetwork
    x0: np.ndarray
    final_time: float
    observable: Observable
    l0: int = 0
    dt0: float | None = None

    @property
    def dt0_value(self) -> float:
        return self.final_time if self.dt0 is None else self.dt0


def model_to_dict(model: ModelSpec) -> dict:
    net = model.network
    data = {
        "name": model.name,
        "species": list(net.species_names),
        "initial": {s: int(v) for s, v in zip(net.species_names, model.x0)},
        "reactions": net.reactions_as_dicts(),
        "final_time": float(model.final_time),
        "observable": model.observable.describe(net),
        "l0": int(model.l0),
    }
    if model.dt0 is not None:
        data["dt0"] = float(model.dt0)
    return data


def model_from_dict(data: Mapping, name: str | None = None) -> ModelSpec:
    species = list(data["species"])
    net = ReactionNetwork.from_reactions(species, data["reactions"])
    initial = data.get("initial", {})
    unknown = set(initial) - set(species)
    if unknown:
        raise ValueError(f"initial state names unknown species: {sorted(unknown)}")
    x0 = np.array([int(initial.get(s, 0)) for s in species], dtype=np.int64)
    if np.any(x0 < 0):
        raise ValueError("initial counts must be non-negative")
    T = float(data["final_time"])
    if not T > 0:
        raise ValueError("final_time must be positive")
    obs_text = data.get("observable")
    g = Observable.parse(obs_text, net) if obs_text else Observable.projection(0)
    dt0 = data.get("dt0")
    return ModelSpec(
        name=name or data.get("name", "model"),
        network=net,
        x0=x0,
        final_time=T,
        observable=g,
        l0=int(data.get("l0", 0)),
        dt0=None if dt0 is None else float(dt0),
    )


def load_model(path) -> ModelSpec:
    path = Path(path)
    with open(path) as fh:
        data = json.load(fh)
    return model_from_dict(data, name=data.get("name", path.stem))


def save_model(model: ModelSpec, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")
