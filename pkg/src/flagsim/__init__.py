"""Simulation of distributed stripe coloring on lines and grids."""

from .concentration import (GradientField, WitnessPair, concentration_at, construct_witness,
                            exact_concentration_color, position_fraction,
                            run_concentration_ribbon)
from .counter import FlajoletCounter, counter_estimate, counter_increment, counter_new
from .errors import *  # noqa: F401,F403
from .flag import Boost, ScriptedRibbon, UpDown, noisy_rows
from .hybrid import (Marking, NoisyGradient, RepairProgram, hybrid_trial, mark_uncertain,
                     posterior, repair_coloring)
from .ribbon import ApproxCount, BubbleSort, ExactCount, ExactSilentCount
from .sim import AgentProgram, Trace, build_grid, build_line, run, trial_rng
from .validators import (FlagSpec, Verdict, canonical_color, canonical_coloring,
                         validate_eps_flag, validate_exact_flag, validate_exact_ribbon)

__version__ = "0.1.0"
