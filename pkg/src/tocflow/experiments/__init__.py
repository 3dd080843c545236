"""Dataset generators and end-to-end experiment drivers."""
from .artifacts import read_array, write_array
from .generators import (DarcyGenSpec, GPTrajectorySpec, KLBasis, SpectrumGenSpec, darcy_pressure_solve,
                         fit_gaussian_reference, fit_stationary_gaussian, gen_corridors, gen_darcy_pairs,
                         gen_gp_mixture_field, gen_spectrum_field, kink_metric, rbf_kernel)
from .tasks import (TASKS, DarcyConfig, ExperimentResult, Fig1Config, FMTaskConfig, GaussianConfig, GenDataConfig,
                    GradcheckConfig, ProximalConfig, SpectrumConfig, TrajectoryConfig, run_darcy, run_experiment,
                    run_fig1, run_fm_train, run_gaussian, run_gen_data, run_gradcheck, run_proximal_check,
                    run_spectrum, run_trajectory)
