"""Terminally constrained sampling by steering flow-based reference dynamics
with optimal-control guidance (gradient descent, Gauss-Newton, TOCFlow)."""
from .constraints import (Constraint, CoordinateEquality, CorridorConstraint, DarcyConstraint, LinearConstraint,
                          NullConstraint, SpectrumConstraint, constraint_from_dict, terminal_cost)
from .errors import (ConfigError, ExperimentError, GridTooSmall, KernelNotPSD, LookaheadDiverged, MissingDataset,
                     NotPositiveDefinite, NumericalBreakdown, SampleDiverged, ShapeError, TocflowError,
                     TrainingDiverged)
from .fields import (Affine1DField, ConstantField, GaussianMixtureField, LinearField, Lookahead, NeuralMLPField,
                     StationaryGaussianField, VelocityField, ZeroField, field_from_dict, lookahead_flow,
                     pullback_grad)
from .guidance import (GuidanceConfig, WeightSchedule, control_gradient, gd_solve, gn_approx_step, gn_solve,
                       stretched_time, terminal_project, toc_solve)
from .sampler import RunReport, SamplerConfig, integrate, sample_batch, sample_one, summarize_costs

__version__ = "0.1.0"
