from perchgen.nlp.ipm import SolveReport, SolverOptions, solve_nlp
from perchgen.nlp.problem import (
    DecisionVector,
    NlpProblem,
    Scenario,
    Weights,
    build_problem,
    initial_guess,
    running_cost_terms,
    solve,
    terminal_cost_terms,
)

__all__ = [
    "DecisionVector",
    "NlpProblem",
    "Scenario",
    "SolveReport",
    "SolverOptions",
    "Weights",
    "build_problem",
    "initial_guess",
    "running_cost_terms",
    "solve",
    "solve_nlp",
    "terminal_cost_terms",
]
