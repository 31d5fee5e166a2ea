use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("impermeability violated: {component} face ({i}, {j}) carries normal velocity {value:e}")]
    Impermeability {
        component: &'static str,
        i: isize,
        j: isize,
        value: f64,
    },

    #[error("friction coefficient must be nonnegative, got {0}")]
    NegativeFriction(f64),

    #[error("density must be {requirement}; cell ({i}, {j}) holds {value:e}")]
    Density {
        requirement: &'static str,
        i: usize,
        j: usize,
        value: f64,
    },

    #[error("CFL violated: {what} ratio {ratio:.4} exceeds 1")]
    Cfl { what: &'static str, ratio: f64 },

    #[error("{solver} did not converge in {iterations} iterations (last residual {last:e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        last: f64,
        residual_history: Vec<f64>,
    },

    #[error("Poisson right-hand side is incompatible: sum {sum:e} exceeds roundoff bound {bound:e}")]
    IncompatibleRhs { sum: f64, bound: f64 },

    #[error("field is not discretely divergence-free: max |div| = {max_div:e} > {tolerance:e}")]
    NotDivergenceFree { max_div: f64, tolerance: f64 },

    #[error("initial momentum is nonzero on vacuum face ({i}, {j}) of the {component} component")]
    Compatibility {
        component: &'static str,
        i: isize,
        j: isize,
    },

    #[error("unsupported Lebesgue exponent {0}; expected 1, 2, 6 or infinity")]
    UnsupportedExponent(f64),

    #[error("weight must have positive integral, got {0:e}")]
    NonPositiveWeight(f64),

    #[error("rate fit rejected: {0}")]
    DegenerateFit(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown scenario `{name}`; registered: {registry}")]
    UnknownScenario { name: String, registry: String },

    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    #[error("step {step} failed: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
