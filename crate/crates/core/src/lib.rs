//! Stochastic volatility models whose volatility is a reflecting diffusion.
//!
//! The crate covers the discrete Skorokhod map and path functionals
//! ([`paths`]), a coefficient catalog ([`models`]), seeded Euler simulation
//! ([`simulate`]), the deterministic skeleton maps ([`control`]), the
//! large-deviation rate functions evaluated by multi-start BFGS ([`rate`]),
//! and Monte Carlo pricing with slope reports ([`pricing`]).

pub mod control;
pub mod error;
pub mod models;
pub mod optim;
pub mod paths;
pub mod pricing;
pub mod rate;
pub mod rng;
pub mod simulate;
pub mod stats;

pub use control::{hat_map, m_operator, solve_controlled, ControlledSolution};
pub use error::{Error, Result};
pub use models::{
    make_constant_vol, make_exponential_vol, make_reflected_bm_drift, make_reflected_ou, validate_coefficients,
    CoefficientSet, Family, ModelSpec, ValidationReport, VolDynamics,
};
pub use optim::OptimizerConfig;
pub use paths::{
    control_energy, integrate_control, modulus_of_continuity, skorokhod_map, sup_norm, Control, Path, TimeGrid,
};
pub use pricing::{
    barrier_ldp_report, call_ldp_report, martingale_check, mc_option_price, terminal_ldp_report, LdpReport,
    MartingaleReport, OptionKind, OptionSpec,
};
pub use rate::{
    itilde, itilde_objective, j_rate, l1_infimum, qtilde, qtilde_pathset_inf, BarrierKind, BarrierSet, Branch,
    RateResult, RateValue,
};
pub use rng::NoiseBundle;
pub use simulate::{
    batch_estimate, batch_estimate_many, batch_estimate_refined, simulate_logprice, simulate_volatility, MCEstimate, SimulatedTriple,
    Statistic,
};

/// Version string recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
