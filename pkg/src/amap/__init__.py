"""Acyclic random mappings, their lattice paths, excursion calculus and tree metrics."""

from amap.chain import run_chain, step, transition_matrix
from amap.excursion_kit import GridFunction, kappa_plus_sample, relocate
from amap.mapping_core import Mapping, decompose, enumerate_acyclic, sample_uniform_acyclic
from amap.path_codec import LatticePath, decode, encode, rescale
from amap.rtree_metric import RootedWeightedTree, delta_ghwr, prohorov, tree_from_path

__all__ = [
    "GridFunction",
    "LatticePath",
    "Mapping",
    "RootedWeightedTree",
    "decode",
    "decompose",
    "delta_ghwr",
    "encode",
    "enumerate_acyclic",
    "kappa_plus_sample",
    "prohorov",
    "relocate",
    "rescale",
    "run_chain",
    "sample_uniform_acyclic",
    "step",
    "transition_matrix",
    "tree_from_path",
]
__version__ = "0.1.0"
