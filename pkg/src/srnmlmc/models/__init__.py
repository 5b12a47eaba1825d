"""Benchmark networks: linear decay, gene transcription/translation, Michaelis-Menten.

Each model is built in code here and also shipped as a JSON model file next
to this module; the test-suite checks the two agree.
"""
from __future__ import annotations

from importlib import resources

import numpy as np

from ..network import ModelSpec, Observable, ReactionNetwork, load_model

MODEL_FILES = {"decay": "decay.json", "gene": "gene.json", "mm": "mm.json"}


def decay_model() -> ModelSpec:
    """X -> 0 with rate 1, X(0) = 10, T = 1; observe X(T)."""
    net = ReactionNetwork.from_reactions(
        ["X"], [{"reactants": {"X": 1}, "products": {}, "rate": 1.0}]
    )
    return ModelSpec("decay", net, np.array([10], dtype=np.int64), 1.0, Observable.projection(0), l0=0)


def gene_model() -> ModelSpec:
    """Gene transcription and translation; observe the mRNA count R(T).

    Species (R, P, D). Reactions: 0 -> R, R -> R + P, 2P -> D, R -> 0, P -> 0.
    """
    net = ReactionNetwork.from_reactions(
        ["R", "P", "D"],
        [
            {"reactants": {}, "products": {"R": 1}, "rate": 25.0},
            {"reactants": {"R": 1}, "products": {"R": 1, "P": 1}, "rate": 1.0e3},
            {"reactants": {"P": 2}, "products": {"D": 1}, "rate": 1.0e-3},
            {"reactants": {"R": 1}, "products": {}, "rate": 0.1},
            {"reactants": {"P": 1}, "products": {}, "rate": 1.0},
        ],
    )
    return ModelSpec("gene", net, np.zeros(3, dtype=np.int64), 1.0, Observable.projection(0), l0=2)


def michaelis_menten_model() -> ModelSpec:
    """Enzyme kinetics E + S <-> C -> E + P; observe the complex count C(T)."""
    net = ReactionNetwork.from_reactions(
        ["E", "S", "C", "P"],
        [
            {"reactants": {"E": 1, "S": 1}, "products": {"C": 1}, "rate": 0.001},
            {"reactants": {"C": 1}, "products": {"E": 1, "S": 1}, "rate": 0.005},
            {"reactants": {"C": 1}, "products": {"E": 1, "P": 1}, "rate": 0.01},
        ],
    )
    return ModelSpec("mm", net, np.array([100, 100, 0, 0], dtype=np.int64), 1.0, Observable.projection(2), l0=0)


BUILDERS = {"decay": decay_model, "gene": gene_model, "mm": michaelis_menten_model}


def bundled_path(name: str):
    return resources.files(__name__).joinpath(MODEL_FILES[name])


def load_bundled(name: str) -> ModelSpec:
    with resources.as_file(bundled_path(name)) as path:
        return load_model(path)


def get_model(name_or_path: str) -> ModelSpec:
    """Resolve a bundled model name (``decay``, ``gene``, ``mm``) or a JSON path."""
    if name_or_path in BUILDERS:
        return load_bundled(name_or_path)
    return load_model(name_or_path)
