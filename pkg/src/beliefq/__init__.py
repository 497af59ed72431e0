"""Stability analysis of a two-server queue with Markov-modulated service.

Subpackages by concern: model (parameters and closed forms), belief
(posterior filtering), policy (myopic line, switching curves, finite-state
controllers), mdp (average-reward value iteration on the belief grid),
qbd (matrix-analytic stability bound), simulate (Monte Carlo engine),
cli (command-line front end).
"""

from . import mdp, policy, qbd, simulate
from .belief import (BeliefPair, Observation, ObservationScheme, belief_space,
                     exact_filter_oracle, stable_fixed_point, success_prob,
                     tau_c, tau_c_bayes, tau_f, tau_n, tau_s, update_belief)
from .errors import (ConvergenceError, DegenerateObservationError,
                     DegenerateTransformError, ParameterError)
from .model import (ChannelChain, EnvState, ServerParams, SystemConfig,
                    config_from_dict, config_to_dict, from_gamma_rho,
                    load_config, mu_star_full, mu_star_no, stationary_moments,
                    step_environment, symmetric_system)

__version__ = "0.1.0"
