"""Simulation and model reduction for multi-dimensional generalized
Langevin equations, with thermodynamic functional ledgers, homogenized
limit models, anomalous drift fields and convergence experiments."""

__version__ = "0.1.0"

from .fields import MatrixField, Potential, VectorField, divergence
from .functionals import FunctionalLedger, LedgerAccumulator, accumulate, \
    stratonovich_integral
from .glespec import FdrReport, GleSpec, check_fdr
from .embed import EmbeddedSystem, embed
from .integrate import IntegrationError, Trajectory, simulate, sup_distance
from .limits import AnomalousHeatDivergenceError, AnomalyReport, \
    HomogenizedModel, anomaly_report, joint_limit, markov_then_mass, \
    markovian_limit, mass_limit, mass_then_markov, reduce
from .matops import MatrixEquationError, OnsagerDecomposition, antisym, \
    is_positive_stable, onsager_decompose, solve_coupled_five, \
    solve_lyapunov, solve_sylvester, sym
from .scenarios import scenario
from .slowfast import GeneralReduction, SlowFastSystem, drift_alpha, \
    reduce_general
from .triples import NoiseTriple, kernel_eval, transform_triple
from .wiener import WienerPath, generate_path, refine
