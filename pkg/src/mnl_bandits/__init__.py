"""Contextual multinomial-logit bandits with general value-function classes."""

from .assortment import AssortmentSolution, all_assortments, best_assortment_bruteforce, best_assortment_fast
from .classes import (
    ContextUniverse, FiniteClass, LinearClass, eval_finite, eval_linear, gen_random_instance, theta_grid,
)
from .core import (
    ChoiceDistribution, choice_distribution, choice_sq_distance, expected_reward, kl_divergence, log_loss,
    sample_purchase,
)
from .dec import DecEstimate, dec_bounds, dec_estimate
from .envs import AdversarialEnv, StochasticEnv, env_step, standard_fixture
from .errors import CapacityError, DomainError, MNLError, SequenceError, SolverError, ValidationError
from .experiment import run_experiment
from .lemmas import verify_lemmas
from .oracles import (
    ErrModel, HedgeState, RegressionSample, erm_fit, hedge_step, linear_logloss_gradient, ogd_step,
)
from .policies import (
    AssortmentDistribution, EpochPlan, FgtsPosterior, epoch_plan, eps_greedy_dist, fgts_loss, fgts_update,
    item_marginals, log_barrier_dist, run_alg1, run_alg2, run_fgts,
)
from .trace import Trace

__version__ = "0.1.0"
