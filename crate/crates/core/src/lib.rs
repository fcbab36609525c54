//! Monotone operators on finite-dimensional `ℓ_p` spaces: generalized
//! resolvents, Moreau–Yosida regularization, lower-limit probes, variational
//! sums and compositions, and Fitzpatrick representability certificates.

pub mod error;
pub mod lp;
pub mod operator;
pub mod probe;
pub mod representability;
pub mod resolvent;
pub mod runner;
pub mod scenario;
pub mod sets;
pub mod space;
pub mod variational;
pub mod zoo;

pub use error::{Error, Result};
pub use operator::{OperatorKind, OperatorSpec, SampledGraph};
pub use resolvent::{moreau_yosida, solve_my_system, solve_translated_inclusion, InclusionSolution, SolverOptions};
pub use sets::{Interval, SetDescription};
pub use space::{Covector, NormedSpace, Point};
pub use probe::{FamilyReport, ProbeParams, ProbeReport, Schedule, ScheduleKind, Verdict};
pub use variational::LinearOp;
