"""Smooth reformulation of propositional-logic constraints for trajectory optimization.

Modules:

``expr``       expression DAG, reverse-mode derivatives, compiled evaluators
``logic_ast``  formula tree (NOT / AND / OR over ``f(z) <= 0`` and ``f(z) = 0``)
``transform``  NNF, CNF / max-min form and the simplex smoothing
``nlp``        problem assembly and the augmented-Lagrangian solver
``baselines``  Big-M and complementarity gate encodings
``quadrotor``  planar quadrotor model and the two benchmark problems
``bench``      multistart experiment harness
``dsl``        text format for formulas and whole problems
``cli``        command line entry point
"""

__version__ = "0.1.0"

from .logic_ast import And, Not, Or, Prop, eval_formula, if_then_else, implies  # noqa: F401
from .transform import MaxMinForm, reformulate, smooth  # noqa: F401
from .nlp import PipelineOptions, SolverOptions, assemble_smooth_ocp, solve  # noqa: F401
