"""Lacunary Walsh-Carleson operators on the dyadic torus.

Submodules:

* :mod:`lacuna.walsh` -- grid signals, Walsh-Paley system, fast transform.
* :mod:`lacuna.tiles` -- dyadic intervals, tiles, bitiles, trees and forests.
* :mod:`lacuna.model` -- lacunary sequences, tile model sums, maximal partial sums.
* :mod:`lacuna.decomposition` -- size, forest decompositions, exceptional sets,
  multi-frequency projection.
* :mod:`lacuna.norms` -- ``L^p``, weak ``L^p``, Orlicz norms, log-towers, layer cakes.
* :mod:`lacuna.experiments` -- seeded campaigns and reports.
"""
from .errors import (ConfigError, EmptySequenceError, FrequencyError, LacunaError,
                     PreconditionError, ResolutionError)
from .model import (TILE_SUM_OFFSET, ChoiceFunction, LacunarySequence, greedy_choice,
                    lacunary_bitiles, maximal_operator, model_sum, parse_sequence,
                    tile_sum_partial)
from .tiles import Bitile, DyadicInterval, Forest, Tile, Tree, is_convex
from .walsh import GridSignal, inverse_walsh, partial_sum, walsh_coefficients, walsh_function

__version__ = "0.1.0"
