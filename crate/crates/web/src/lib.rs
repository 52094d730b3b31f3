//! WebAssembly bindings for the browser demo. Every exported call is a thin
//! wrapper over a plain Rust function so the numerics are testable natively.

use magnon_core::analysis::{averaged_ground_amplitude, fit_localization_length};
use magnon_core::dynamics::TransferProblem;
use magnon_core::optimize::{adam_step, AdamState, OptimizerConfig};
use magnon_core::protocols::{linear_protocol, param_gradient, sta_reference, velocity, Ansatz, StaVariant};
use magnon_core::{ChainSpec, ControlProtocol, TransportTask};
use wasm_bindgen::prelude::*;

/// Largest chain the page will simulate; keeps a browser call under a second or so.
pub const MAX_SITES: usize = 401;

fn js(e: magnon_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn setup(n_sites: usize, trap_frequency: f64, distance: f64, duration: f64) -> magnon_core::Result<(ChainSpec, TransportTask)> {
    if n_sites > MAX_SITES {
        return Err(magnon_core::Error::InvalidInput(format!("at most {MAX_SITES} sites in the demo")));
    }
    let chain = ChainSpec::new(n_sites, 1.0, trap_frequency)?;
    let task = TransportTask::centered(&chain, distance, duration)?;
    Ok((chain, task))
}

/// Site occupation |ψ_n|² at `frames` evenly spaced times, flattened frame-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Movie {
    pub n_sites: usize,
    pub times: Vec<f64>,
    pub density: Vec<f64>,
    pub trap: Vec<f64>,
    pub infidelity: f64,
}

pub fn simulate_protocol(
    n_sites: usize,
    trap_frequency: f64,
    distance: f64,
    duration: f64,
    kind: &str,
    frames: usize,
) -> magnon_core::Result<Movie> {
    let (chain, task) = setup(n_sites, trap_frequency, distance, duration)?;
    let protocol = match kind {
        "linear" => linear_protocol(&task),
        "sta" => sta_reference(&task, &chain, StaVariant::Derived),
        other => return Err(magnon_core::Error::InvalidInput(format!("unknown protocol `{other}`"))),
    };
    movie(&chain, &task, &protocol, frames)
}

pub fn movie(chain: &ChainSpec, task: &TransportTask, protocol: &ControlProtocol, frames: usize) -> magnon_core::Result<Movie> {
    let problem = TransferProblem::new(chain, task, None)?;
    let trajectory = problem.evolve(protocol)?;
    let m = protocol.n_bins();
    let frames = frames.clamp(2, m + 1);
    let mut times = Vec::with_capacity(frames);
    let mut density = Vec::with_capacity(frames * chain.n_sites);
    let mut trap = Vec::with_capacity(frames);
    for f in 0..frames {
        let k = f * m / (frames - 1);
        times.push(k as f64 * protocol.bin_width);
        trap.push(protocol.samples[k]);
        density.extend(trajectory.states[k].probabilities());
    }
    let z = problem.target_state().overlap(trajectory.final_state());
    Ok(Movie {
        n_sites: chain.n_sites,
        times,
        density,
        trap,
        infidelity: 1.0 - z.norm_sqr(),
    })
}

/// Disorder-averaged ground-state amplitude, centred, with its fitted ξ.
pub fn localization_profile(n_sites: usize, magnitude: f64, realizations: usize, seed: u64) -> magnon_core::Result<(Vec<f64>, f64)> {
    if n_sites > MAX_SITES {
        return Err(magnon_core::Error::InvalidInput(format!("at most {MAX_SITES} sites in the demo")));
    }
    let chain = ChainSpec::new(n_sites, 1.0, 0.5)?;
    let profile = averaged_ground_amplitude(&chain, magnitude, realizations, seed)?;
    let xi = fit_localization_length(&profile)?.xi;
    Ok((profile, xi))
}

/// Stepwise ADAM on the Fourier ansatz so the page can animate convergence.
pub struct FourierSession {
    chain: ChainSpec,
    task: TransportTask,
    problem: TransferProblem,
    ansatz: Ansatz,
    config: OptimizerConfig,
    params: Vec<f64>,
    state: AdamState,
    steps: usize,
    history: Vec<f64>,
}

impl FourierSession {
    pub fn new(n_sites: usize, trap_frequency: f64, distance: f64, duration: f64, cutoff: usize, learning_rate: f64) -> magnon_core::Result<Self> {
        let (chain, task) = setup(n_sites, trap_frequency, distance, duration)?;
        if cutoff == 0 {
            return Err(magnon_core::Error::InvalidInput("cutoff must be >= 1".into()));
        }
        let config = OptimizerConfig::adam(learning_rate);
        config.validate()?;
        let problem = TransferProblem::new(&chain, &task, None)?;
        Ok(FourierSession {
            chain,
            task,
            problem,
            ansatz: Ansatz::Fourier { cutoff },
            config,
            params: vec![0.0; cutoff],
            state: AdamState::new(cutoff),
            steps: 0,
            history: Vec::new(),
        })
    }

    /// Runs `n` updates; returns the infidelity before the last one.
    pub fn advance(&mut self, n: usize) -> magnon_core::Result<f64> {
        for _ in 0..n {
            let (protocol, jac) = self.ansatz.lower(&self.chain, &self.task, &self.params)?;
            let (value, bins) = self.problem.infidelity_gradient(&protocol)?;
            let grad = param_gradient(&bins.values, &jac)?;
            self.history.push(value);
            self.steps += 1;
            let (p, s) = adam_step(&self.params, &grad, &self.state, &self.config, self.steps);
            self.params = p;
            self.state = s;
        }
        Ok(self.history.last().copied().unwrap_or(f64::NAN))
    }

    pub fn protocol(&self) -> magnon_core::Result<ControlProtocol> {
        Ok(self.ansatz.lower(&self.chain, &self.task, &self.params)?.0)
    }

    pub fn infidelity(&self) -> magnon_core::Result<f64> {
        self.problem.infidelity(&self.protocol()?)
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }
}

#[wasm_bindgen]
pub struct Simulation(Movie);

#[wasm_bindgen]
impl Simulation {
    /// `kind` is `"linear"` or `"sta"`.
    #[wasm_bindgen(constructor)]
    pub fn new(n_sites: usize, trap_frequency: f64, distance: f64, duration: f64, kind: &str, frames: usize) -> Result<Simulation, JsError> {
        simulate_protocol(n_sites, trap_frequency, distance, duration, kind, frames).map(Simulation).map_err(js)
    }

    #[wasm_bindgen(getter)]
    pub fn n_sites(&self) -> usize {
        self.0.n_sites
    }

    #[wasm_bindgen(getter)]
    pub fn infidelity(&self) -> f64 {
        self.0.infidelity
    }

    pub fn times(&self) -> Vec<f64> {
        self.0.times.clone()
    }

    pub fn density(&self) -> Vec<f64> {
        self.0.density.clone()
    }

    pub fn trap(&self) -> Vec<f64> {
        self.0.trap.clone()
    }
}

#[wasm_bindgen]
pub struct Localization {
    profile: Vec<f64>,
    xi: f64,
}

#[wasm_bindgen]
impl Localization {
    #[wasm_bindgen(constructor)]
    pub fn new(n_sites: usize, magnitude: f64, realizations: usize, seed: u64) -> Result<Localization, JsError> {
        let (profile, xi) = localization_profile(n_sites, magnitude, realizations, seed).map_err(js)?;
        Ok(Localization { profile, xi })
    }

    pub fn profile(&self) -> Vec<f64> {
        self.profile.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn xi(&self) -> f64 {
        self.xi
    }
}

#[wasm_bindgen]
pub struct FourierOptimizer(FourierSession);

#[wasm_bindgen]
impl FourierOptimizer {
    #[wasm_bindgen(constructor)]
    pub fn new(n_sites: usize, trap_frequency: f64, distance: f64, duration: f64, cutoff: usize, learning_rate: f64) -> Result<FourierOptimizer, JsError> {
        FourierSession::new(n_sites, trap_frequency, distance, duration, cutoff, learning_rate)
            .map(FourierOptimizer)
            .map_err(js)
    }

    pub fn step(&mut self, n: usize) -> Result<f64, JsError> {
        self.0.advance(n).map_err(js)
    }

    pub fn infidelity(&self) -> Result<f64, JsError> {
        self.0.infidelity().map_err(js)
    }

    pub fn history(&self) -> Vec<f64> {
        self.0.history().to_vec()
    }

    pub fn positions(&self) -> Result<Vec<f64>, JsError> {
        Ok(self.0.protocol().map_err(js)?.samples)
    }

    pub fn velocity(&self) -> Result<Vec<f64>, JsError> {
        velocity(&self.0.protocol().map_err(js)?).map_err(js)
    }

    pub fn bin_width(&self) -> f64 {
        self.0.task.step_width()
    }
}
