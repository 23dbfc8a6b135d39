//! Simulation study: test signals, random blur kernels, the random
//! eigenvalue model, and a seeded Monte Carlo runner producing tables of
//! normalized relative risk.

pub mod experiment;
pub mod kernels;
pub mod rng;
pub mod signals;
pub mod svg;

pub use experiment::{
    random_eigenvalue_mse, rr, rr_from_losses, run_experiment, ExperimentConfig, Method, RRCell,
    RRTable, Snapshot,
};
pub use kernels::{
    mixture_kernel, sample_kernel, sample_random_eigenvalues, simulate_signal, simulate_spectral,
    KERNEL_MEANS, KERNEL_SIGMA_BASE,
};
pub use rng::{rng_for, substream_seed, SimRng};
pub use signals::{gen_theta_peaked, gen_theta_smooth, smooth_spectrum, SignalSpec};
